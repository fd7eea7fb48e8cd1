#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdm/schedule.hpp"
#include "cdm/types.hpp"

namespace cdm {

enum class Activation { Silu, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct NetConfig {
    int input_dim = 2;
    std::vector<int> hidden = {256, 256, 256};
    int num_classes = 0;  // must equal schedule.num_classes()
    Activation activation = Activation::Silu;
    bool cumsum_head = true;
};

// Recorded forward state of one batch, sufficient to differentiate scalar
// functionals of the logits w.r.t. the input, and to differentiate losses
// containing such input-gradients w.r.t. the parameters.
struct Tape {
    std::vector<Mat> h;       // h[i]: input to layer i (h[0] = X), plus h[L] = last hidden
    std::vector<Mat> a;       // a[i]: pre-activation of hidden layer i
    std::vector<Mat> dact;    // act'(a[i])
    Mat raw;                  // pre-head outputs (K x B)
    Mat logits;               // after optional cumsum head
    // input-gradient branch
    Mat u;                    // adjoint seed pulled through the head (K x B)
    std::vector<Mat> r;       // r[i]: gradient flowing into layer i's input; r[L] into last hidden
    std::vector<Mat> s;       // s[i] = dact[i] .* r[i+1]
    Mat input_grad;           // d F / d x per column
};

struct GradBuffers {
    std::vector<Mat> dW;
    std::vector<Vec> db;
    void setZero();
    double squaredNorm() const;
};

enum class LossMode { Both, CeOnly, MseOnly };
std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

struct LossTerms {
    double ce = 0.0;    // mean cross-entropy over the batch
    double mse = 0.0;   // mean per-coordinate squared noise-prediction error
    double acc = 0.0;   // argmax accuracy on the batch
    double total = 0.0;
};

struct Batch {
    Mat xt;              // d x B noisy inputs
    std::vector<int> t;  // timestep per column
    Mat eps;             // d x B noise targets
    Mat x0;              // d x B clean signals (metadata; not used by the loss)
};

// Fully-connected noise-level classifier. No timestep conditioning input;
// the logit vector covers all augmented timesteps at once.
class ClassifierNet {
  public:
    static ClassifierNet init(const NetConfig& cfg, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    int input_dim() const { return cfg_.input_dim; }
    int num_classes() const { return cfg_.num_classes; }

    Vec forward_logits(const Vec& x) const;
    Mat forward_logits_batch(const Mat& x) const;

    // gradient of F(x,t) = logits[noise_idx] - logits[t] w.r.t. x
    Vec input_gradient(const Vec& x, int t) const;
    Mat input_gradient_batch(const Mat& x, const std::vector<int>& t) const;
    // as above, but also returns the recorded tape (logits included)
    Mat input_gradient_batch(const Mat& x, const std::vector<int>& t, Tape& tape) const;

    // Combined Algorithm-1 loss and its parameter gradients, including the
    // second-order path through the input gradient. CE and MSE metrics are
    // always reported; loss_mode controls which terms contribute to `total`
    // and to the gradients.
    LossTerms loss_and_param_grads(const Batch& batch, const NoiseSchedule& schedule,
                                   double w_ce, LossMode mode, GradBuffers& grads) const;

    std::vector<Mat>& weights() { return W_; }
    std::vector<Vec>& biases() { return b_; }
    const std::vector<Mat>& weights() const { return W_; }
    const std::vector<Vec>& biases() const { return b_; }

    GradBuffers zero_grads() const;
    std::size_t param_count() const;
    std::vector<double> flatten_params() const;
    void load_params(const std::vector<double>& flat);

    // instrumentation for the single-NFE contract (counts per input column)
    std::uint64_t forward_count() const { return forward_count_; }
    std::uint64_t gradient_count() const { return gradient_count_; }
    void reset_counters() const { forward_count_ = 0; gradient_count_ = 0; }

  private:
    Mat forward_into_tape(const Mat& x, Tape& tape) const;
    void backward_input_grad(Tape& tape, const std::vector<int>& t) const;

    NetConfig cfg_;
    std::vector<Mat> W_;  // W_[i]: layer i, rows = fan-out
    std::vector<Vec> b_;
    mutable std::uint64_t forward_count_ = 0;  // per-call bookkeeping, not thread-safe
    mutable std::uint64_t gradient_count_ = 0;
};

Vec log_softmax(const Vec& logits);
Mat log_softmax_cols(const Mat& logits);

// Worst relative disagreement between analytic parameter gradients of the
// combined loss and central finite differences of step h. Exercises the
// second-order path through the input gradient; intended for small nets.
double param_gradcheck(const ClassifierNet& net, const Batch& batch,
                       const NoiseSchedule& schedule, double w_ce, LossMode mode,
                       double h = 1e-4);

}  // namespace cdm
