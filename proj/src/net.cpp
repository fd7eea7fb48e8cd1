#include "cdm/net.hpp"

#include <cmath>
#include <stdexcept>

namespace cdm {

std::string to_string(Activation a) {
    return a == Activation::Silu ? "silu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::Silu;
    if (s == "tanh") return Activation::Tanh;
    throw std::invalid_argument("invalid activation: " + s);
}

std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::Both: return "both";
        case LossMode::CeOnly: return "ce_only";
        case LossMode::MseOnly: return "mse_only";
    }
    throw std::invalid_argument("unknown loss mode");
}

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "both") return LossMode::Both;
    if (s == "ce_only") return LossMode::CeOnly;
    if (s == "mse_only") return LossMode::MseOnly;
    throw std::invalid_argument("invalid loss mode: " + s);
}

void GradBuffers::setZero() {
    for (auto& m : dW) m.setZero();
    for (auto& v : db) v.setZero();
}

double GradBuffers::squaredNorm() const {
    double s = 0.0;
    for (const auto& m : dW) s += m.squaredNorm();
    for (const auto& v : db) s += v.squaredNorm();
    return s;
}

namespace {

// smooth activations with first and second derivatives (the MSE-on-input-
// gradient term needs act'' for its parameter gradients)
void act_value_deriv(Activation act, const Mat& a, Mat& val, Mat& d1) {
    switch (act) {
        case Activation::Silu: {
            Mat sg = (1.0 + (-a.array()).exp()).inverse().matrix();
            val = a.cwiseProduct(sg);
            d1 = (sg.array() * (1.0 + a.array() * (1.0 - sg.array()))).matrix();
            break;
        }
        case Activation::Tanh: {
            val = a.array().tanh().matrix();
            d1 = (1.0 - val.array().square()).matrix();
            break;
        }
    }
}

Mat act_second_deriv(Activation act, const Mat& a) {
    switch (act) {
        case Activation::Silu: {
            Eigen::ArrayXXd sg = (1.0 + (-a.array()).exp()).inverse();
            Eigen::ArrayXXd gp = sg * (1.0 - sg);
            return (gp * (2.0 + a.array() * (1.0 - 2.0 * sg))).matrix();
        }
        case Activation::Tanh: {
            Eigen::ArrayXXd th = a.array().tanh();
            return (-2.0 * th * (1.0 - th.square())).matrix();
        }
    }
    throw std::logic_error("unreachable");
}

Mat prefix_sum_cols(const Mat& m) {
    Mat out = m;
    for (int i = 1; i < out.rows(); ++i) out.row(i) += out.row(i - 1);
    return out;
}

Mat suffix_sum_cols(const Mat& m) {
    Mat out = m;
    for (int i = int(out.rows()) - 2; i >= 0; --i) out.row(i) += out.row(i + 1);
    return out;
}

}  // namespace

Vec log_softmax(const Vec& logits) {
    const double m = logits.maxCoeff();  // max-subtraction for stability
    const double lse = std::log((logits.array() - m).exp().sum()) + m;
    return logits.array() - lse;
}

Mat log_softmax_cols(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (int j = 0; j < logits.cols(); ++j) out.col(j) = log_softmax(logits.col(j));
    return out;
}

ClassifierNet ClassifierNet::init(const NetConfig& cfg, std::uint64_t seed) {
    if (cfg.input_dim < 1 || cfg.num_classes < 2)
        throw std::invalid_argument("net requires input_dim >= 1 and num_classes >= 2");
    for (int h : cfg.hidden)
        if (h < 1) throw std::invalid_argument("hidden widths must be positive");

    ClassifierNet net;
    net.cfg_ = cfg;
    std::vector<int> dims;
    dims.push_back(cfg.input_dim);
    for (int h : cfg.hidden) dims.push_back(h);
    dims.push_back(cfg.num_classes);

    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    const int n_layers = int(dims.size()) - 1;
    for (int l = 0; l < n_layers; ++l) {
        Mat w(dims[l + 1], dims[l]);
        if (l == n_layers - 1) {
            // zero-initialized final layer: training starts from the uniform classifier
            w.setZero();
        } else {
            const double scale = 1.0 / std::sqrt(double(dims[l]));
            for (int j = 0; j < w.cols(); ++j)
                for (int i = 0; i < w.rows(); ++i) w(i, j) = scale * n01(rng);
        }
        net.W_.push_back(std::move(w));
        net.b_.push_back(Vec::Zero(dims[l + 1]));
    }
    return net;
}

Mat ClassifierNet::forward_into_tape(const Mat& x, Tape& tape) const {
    if (x.rows() != cfg_.input_dim)
        throw std::invalid_argument("forward: input dimension mismatch");
    const int L = int(cfg_.hidden.size());
    tape.h.assign(L + 1, Mat());
    tape.a.assign(L, Mat());
    tape.dact.assign(L, Mat());
    tape.h[0] = x;
    for (int i = 0; i < L; ++i) {
        tape.a[i] = (W_[i] * tape.h[i]).colwise() + b_[i];
        act_value_deriv(cfg_.activation, tape.a[i], tape.h[i + 1], tape.dact[i]);
    }
    tape.raw = (W_[L] * tape.h[L]).colwise() + b_[L];
    tape.logits = cfg_.cumsum_head ? prefix_sum_cols(tape.raw) : tape.raw;
    if (!tape.logits.allFinite())
        throw std::runtime_error("non-finite logits (parameter blow-up)");
    forward_count_ += std::uint64_t(x.cols());
    return tape.logits;
}

void ClassifierNet::backward_input_grad(Tape& tape, const std::vector<int>& t) const {
    const int L = int(cfg_.hidden.size());
    const int K = cfg_.num_classes;
    const int B = int(tape.h[0].cols());
    const int noise_idx = K - 1;
    if (int(t.size()) != B) throw std::invalid_argument("timestep list size mismatch");

    // u = head^T (e_noise - e_t); with the cumsum head this is the suffix sum,
    // i.e. u[i] = 1 for t < i <= noise_idx and 0 elsewhere.
    tape.u = Mat::Zero(K, B);
    for (int j = 0; j < B; ++j) {
        if (t[j] < 0 || t[j] > noise_idx)
            throw std::out_of_range("timestep out of range in gradient request");
        if (cfg_.cumsum_head) {
            for (int i = t[j] + 1; i <= noise_idx; ++i) tape.u(i, j) = 1.0;
        } else {
            tape.u(noise_idx, j) += 1.0;
            tape.u(t[j], j) -= 1.0;
        }
    }

    tape.r.assign(L + 1, Mat());
    tape.s.assign(L, Mat());
    tape.r[L] = W_[L].transpose() * tape.u;
    for (int i = L - 1; i >= 0; --i) {
        tape.s[i] = tape.dact[i].cwiseProduct(tape.r[i + 1]);
        tape.r[i] = W_[i].transpose() * tape.s[i];
    }
    tape.input_grad = tape.r[0];
    gradient_count_ += std::uint64_t(B);
}

Vec ClassifierNet::forward_logits(const Vec& x) const {
    Tape tape;
    return forward_into_tape(x, tape).col(0);
}

Mat ClassifierNet::forward_logits_batch(const Mat& x) const {
    Tape tape;
    return forward_into_tape(x, tape);
}

Vec ClassifierNet::input_gradient(const Vec& x, int t) const {
    Tape tape;
    forward_into_tape(x, tape);
    backward_input_grad(tape, {t});
    return tape.input_grad.col(0);
}

Mat ClassifierNet::input_gradient_batch(const Mat& x, const std::vector<int>& t) const {
    Tape tape;
    return input_gradient_batch(x, t, tape);
}

Mat ClassifierNet::input_gradient_batch(const Mat& x, const std::vector<int>& t, Tape& tape) const {
    forward_into_tape(x, tape);
    backward_input_grad(tape, t);
    return tape.input_grad;
}

GradBuffers ClassifierNet::zero_grads() const {
    GradBuffers g;
    for (const auto& w : W_) g.dW.push_back(Mat::Zero(w.rows(), w.cols()));
    for (const auto& b : b_) g.db.push_back(Vec::Zero(b.size()));
    return g;
}

LossTerms ClassifierNet::loss_and_param_grads(const Batch& batch, const NoiseSchedule& schedule,
                                              double w_ce, LossMode mode,
                                              GradBuffers& grads) const {
    const int B = int(batch.xt.cols());
    if (B == 0) throw std::invalid_argument("empty batch");
    if (batch.eps.cols() != B || int(batch.t.size()) != B)
        throw std::invalid_argument("batch field sizes disagree");
    if (cfg_.num_classes != schedule.num_classes())
        throw std::invalid_argument("net output width does not match schedule classes");
    const int d = cfg_.input_dim;
    const int L = int(cfg_.hidden.size());

    Tape tape;
    forward_into_tape(batch.xt, tape);
    backward_input_grad(tape, batch.t);

    Vec c(B);
    for (int j = 0; j < B; ++j) c(j) = schedule.noise_coef(batch.t[j]);

    Mat eps_hat = (tape.input_grad + batch.xt) * c.asDiagonal();
    Mat diff = eps_hat - batch.eps;

    Mat lsm = log_softmax_cols(tape.logits);
    LossTerms terms;
    terms.mse = diff.squaredNorm() / double(d) / double(B);
    for (int j = 0; j < B; ++j) {
        terms.ce -= lsm(batch.t[j], j);
        int pred;
        tape.logits.col(j).maxCoeff(&pred);
        if (pred == batch.t[j]) terms.acc += 1.0;
    }
    terms.ce /= B;
    terms.acc /= B;
    switch (mode) {
        case LossMode::Both: terms.total = w_ce * terms.ce + terms.mse; break;
        case LossMode::CeOnly: terms.total = w_ce * terms.ce; break;
        case LossMode::MseOnly: terms.total = terms.mse; break;
    }
    if (!std::isfinite(terms.total)) {
        for (int j = 0; j < B; ++j)
            if (!eps_hat.col(j).allFinite() || !lsm.col(j).allFinite())
                throw std::runtime_error("non-finite loss at batch sample " + std::to_string(j));
        throw std::runtime_error("non-finite loss");
    }

    const double mce = (mode == LossMode::MseOnly) ? 0.0 : w_ce;
    const double mm = (mode == LossMode::CeOnly) ? 0.0 : 1.0;

    grads.setZero();
    std::vector<Mat> abar2(L);  // second-order contributions to the pre-activation adjoints

    if (mm != 0.0) {
        // adjoint of the input-gradient g, then replay the recorded backward
        // graph forwards: r[0] -> s[0] -> r[1] -> ... -> r[L] -> u
        Mat rbar(d, B);
        for (int j = 0; j < B; ++j)
            rbar.col(j) = (2.0 * mm * c(j) / (double(d) * B)) * diff.col(j);
        for (int i = 0; i < L; ++i) {
            grads.dW[i] += tape.s[i] * rbar.transpose();
            Mat sbar = W_[i] * rbar;
            abar2[i] = act_second_deriv(cfg_.activation, tape.a[i])
                           .cwiseProduct(tape.r[i + 1])
                           .cwiseProduct(sbar);
            rbar = tape.dact[i].cwiseProduct(sbar);
        }
        grads.dW[L] += tape.u * rbar.transpose();
    }

    // first-order CE path plus the accumulated second-order pre-activation adjoints
    Mat zbar = Mat::Zero(cfg_.num_classes, B);
    if (mce != 0.0) {
        zbar = (mce / B) * lsm.array().exp().matrix();
        for (int j = 0; j < B; ++j) zbar(batch.t[j], j) -= mce / B;
    }
    Mat ybar = cfg_.cumsum_head ? suffix_sum_cols(zbar) : zbar;
    grads.dW[L] += ybar * tape.h[L].transpose();
    grads.db[L] += ybar.rowwise().sum();
    if (L > 0) {
        Mat hbar = W_[L].transpose() * ybar;
        for (int i = L - 1; i >= 0; --i) {
            Mat abar = tape.dact[i].cwiseProduct(hbar);
            if (mm != 0.0) abar += abar2[i];
            grads.dW[i] += abar * tape.h[i].transpose();
            grads.db[i] += abar.rowwise().sum();
            if (i > 0) hbar = W_[i].transpose() * abar;
        }
    }
    return terms;
}

std::size_t ClassifierNet::param_count() const {
    std::size_t n = 0;
    for (const auto& w : W_) n += std::size_t(w.size());
    for (const auto& b : b_) n += std::size_t(b.size());
    return n;
}

std::vector<double> ClassifierNet::flatten_params() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const auto& w : W_) flat.insert(flat.end(), w.data(), w.data() + w.size());
    for (const auto& b : b_) flat.insert(flat.end(), b.data(), b.data() + b.size());
    return flat;
}

void ClassifierNet::load_params(const std::vector<double>& flat) {
    if (flat.size() != param_count())
        throw std::invalid_argument("parameter vector size mismatch");
    std::size_t off = 0;
    for (auto& w : W_) {
        std::copy(flat.begin() + off, flat.begin() + off + w.size(), w.data());
        off += std::size_t(w.size());
    }
    for (auto& b : b_) {
        std::copy(flat.begin() + off, flat.begin() + off + b.size(), b.data());
        off += std::size_t(b.size());
    }
}

double param_gradcheck(const ClassifierNet& net, const Batch& batch,
                       const NoiseSchedule& schedule, double w_ce, LossMode mode, double h) {
    ClassifierNet work = net;
    GradBuffers grads = work.zero_grads();
    work.loss_and_param_grads(batch, schedule, w_ce, mode, grads);

    std::vector<double> analytic;
    analytic.reserve(work.param_count());
    for (const auto& w : grads.dW) analytic.insert(analytic.end(), w.data(), w.data() + w.size());
    for (const auto& b : grads.db) analytic.insert(analytic.end(), b.data(), b.data() + b.size());

    std::vector<double> flat = work.flatten_params();
    GradBuffers scratch = work.zero_grads();
    auto loss_at = [&](std::size_t i, double value) {
        const double saved = flat[i];
        flat[i] = value;
        work.load_params(flat);
        flat[i] = saved;
        return work.loss_and_param_grads(batch, schedule, w_ce, mode, scratch).total;
    };

    double scale = 0.0;
    for (double a : analytic) scale = std::max(scale, std::abs(a));
    const double floor = std::max(1e-8, 1e-6 * scale);

    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double fd = (loss_at(i, flat[i] + h) - loss_at(i, flat[i] - h)) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(fd), floor});
        worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
    work.load_params(flat);
    return worst;
}

}  // namespace cdm
