#pragma once

// Dense ReLU networks with hand-written backprop, Adam and a diagonal
// Gaussian policy head. All parameters of a network live in one flat vector
// so optimiser state and checkpoints are plain arrays.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reflectsim/errors.hpp"

namespace reflectsim {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class DenseNet {
public:
    struct Cache {
        const DenseNet* owner = nullptr;
        std::uint64_t version = 0;
        std::vector<RowMatrix> inputs;  // input to each layer
        std::vector<RowMatrix> pre;     // pre-activation of each layer
    };

    struct Gradients {
        Eigen::VectorXd params;
        RowMatrix input;
    };

    DenseNet() = default;

    explicit DenseNet(std::vector<int> dims) : dims_(std::move(dims)) {
        if (dims_.size() < 2) throw InvalidArgument("DenseNet: need at least input and output dims");
        for (int d : dims_)
            if (d < 1) throw InvalidArgument("DenseNet: layer dims must be positive");
        Eigen::Index offset = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            w_offset_.push_back(offset);
            offset += static_cast<Eigen::Index>(dims_[l]) * dims_[l + 1];
            b_offset_.push_back(offset);
            offset += dims_[l + 1];
        }
        params_ = Eigen::VectorXd::Zero(offset);
    }

    const std::vector<int>& dims() const { return dims_; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    std::size_t num_layers() const { return dims_.size() - 1; }
    Eigen::Index num_params() const { return params_.size(); }
    std::uint64_t version() const { return version_; }

    const Eigen::VectorXd& params() const { return params_; }
    /// Mutable access invalidates outstanding forward caches.
    Eigen::VectorXd& mutable_params() {
        ++version_;
        return params_;
    }

    Eigen::Map<const RowMatrix> weight(std::size_t l) const {
        return {params_.data() + w_offset_[l], dims_[l + 1], dims_[l]};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const {
        return {params_.data() + b_offset_[l], dims_[l + 1]};
    }
    Eigen::Map<RowMatrix> weight(std::size_t l) {
        ++version_;
        return {params_.data() + w_offset_[l], dims_[l + 1], dims_[l]};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t l) {
        ++version_;
        return {params_.data() + b_offset_[l], dims_[l + 1]};
    }

    /// Uniform fan-in initialisation with variance gain^2 / fan_in; zero biases.
    void initialize(std::mt19937_64& rng, double hidden_gain, double output_gain) {
        ++version_;
        params_.setZero();
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const double gain = l + 1 == num_layers() ? output_gain : hidden_gain;
            const double a = gain * std::sqrt(3.0 / dims_[l]);
            std::uniform_real_distribution<double> dist(-a, a);
            double* w = params_.data() + w_offset_[l];
            const Eigen::Index n = static_cast<Eigen::Index>(dims_[l]) * dims_[l + 1];
            for (Eigen::Index i = 0; i < n; ++i) w[i] = dist(rng);
        }
    }

    /// Batched forward pass; rows of `x` are samples.
    RowMatrix forward(const RowMatrix& x, Cache* cache = nullptr) const {
        if (x.cols() != input_dim()) throw InvalidArgument("DenseNet::forward: input dimension mismatch");
        if (cache) {
            cache->owner = this;
            cache->version = version_;
            cache->inputs.clear();
            cache->pre.clear();
        }
        RowMatrix a = x;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            RowMatrix z = a * weight(l).transpose();
            z.rowwise() += bias(l).transpose();
            if (cache) {
                cache->inputs.push_back(std::move(a));
                cache->pre.push_back(z);
            }
            a = l + 1 == num_layers() ? std::move(z) : RowMatrix(z.cwiseMax(0.0));
        }
        return a;
    }

    std::vector<double> forward(std::span<const double> x) const {
        if (x.size() != static_cast<std::size_t>(input_dim()))
            throw InvalidArgument("DenseNet::forward: input dimension mismatch");
        RowMatrix in = Eigen::Map<const RowMatrix>(x.data(), 1, input_dim());
        const RowMatrix y = forward(in);
        return {y.data(), y.data() + y.size()};
    }

    Gradients backward(const Cache& cache, const RowMatrix& dy) const {
        if (cache.owner != this || cache.version != version_ || cache.pre.size() != num_layers())
            throw ContractViolation("DenseNet::backward: cache does not belong to the current parameters");
        if (dy.rows() != cache.pre.back().rows() || dy.cols() != output_dim())
            throw InvalidArgument("DenseNet::backward: upstream gradient shape mismatch");
        Gradients g;
        g.params = Eigen::VectorXd::Zero(params_.size());
        RowMatrix delta = dy;
        for (std::size_t l = num_layers(); l-- > 0;) {
            if (l + 1 != num_layers()) delta = delta.cwiseProduct(RowMatrix((cache.pre[l].array() > 0.0).cast<double>()));
            Eigen::Map<RowMatrix> gw(g.params.data() + w_offset_[l], dims_[l + 1], dims_[l]);
            Eigen::Map<Eigen::VectorXd> gb(g.params.data() + b_offset_[l], dims_[l + 1]);
            gw.noalias() = delta.transpose() * cache.inputs[l];
            gb = delta.colwise().sum().transpose();
            delta = delta * weight(l);
        }
        g.input = std::move(delta);
        return g;
    }

private:
    std::vector<int> dims_;
    Eigen::VectorXd params_;
    std::vector<Eigen::Index> w_offset_;
    std::vector<Eigen::Index> b_offset_;
    std::uint64_t version_ = 0;
};

struct AdamConfig {
    double lr = 2.0e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t t = 0;

    AdamState() = default;
    explicit AdamState(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// Bias-corrected Adam step, in place.
inline void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads, AdamState& state,
                      const AdamConfig& cfg) {
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw InvalidArgument("adam_step: shape mismatch");
    ++state.t;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    params.array() -= cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

inline void adam_step(DenseNet& net, const Eigen::VectorXd& grads, AdamState& state, const AdamConfig& cfg) {
    adam_step(net.mutable_params(), grads, state, cfg);
}

/// State-independent diagonal Gaussian over actions.
struct GaussianPolicyHead {
    static constexpr double kMinLogStd = -5.0;
    static constexpr double kMaxLogStd = 1.0;

    Eigen::VectorXd log_std;

    GaussianPolicyHead() = default;
    GaussianPolicyHead(int dim, double initial_log_std)
        : log_std(Eigen::VectorXd::Constant(dim, std::clamp(initial_log_std, kMinLogStd, kMaxLogStd))) {}

    int dim() const { return static_cast<int>(log_std.size()); }
    void clamp() { log_std = log_std.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd); }
};

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

inline double log_prob_of(const GaussianPolicyHead& head, std::span<const double> mean, std::span<const double> action) {
    if (mean.size() != static_cast<std::size_t>(head.dim()) || action.size() != mean.size())
        throw InvalidArgument("log_prob_of: dimension mismatch");
    double lp = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double ls = head.log_std[static_cast<Eigen::Index>(i)];
        const double z = (action[i] - mean[i]) / std::exp(ls);
        lp += -0.5 * z * z - ls - 0.5 * kLogTwoPi;
    }
    return lp;
}

struct PolicySample {
    std::vector<double> action;
    double log_prob = 0.0;
};

inline PolicySample policy_sample(const GaussianPolicyHead& head, std::span<const double> mean, std::mt19937_64& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    PolicySample s;
    s.action.resize(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i)
        s.action[i] = mean[i] + std::exp(head.log_std[static_cast<Eigen::Index>(i)]) * unit(rng);
    s.log_prob = log_prob_of(head, mean, s.action);
    return s;
}

inline double gaussian_entropy(const GaussianPolicyHead& head) {
    return head.log_std.sum() + 0.5 * head.dim() * (kLogTwoPi + 1.0);
}

// ---- text serialisation -------------------------------------------------

namespace detail {

inline void write_doubles(std::ostream& os, std::span<const double> values) {
    char buf[32];
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto res = std::to_chars(buf, buf + sizeof(buf), values[i]);
        if (i) os << ' ';
        os.write(buf, res.ptr - buf);
    }
    os << '\n';
}

inline double parse_double(const std::string& tok) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw InvalidConfiguration("checkpoint: malformed number '" + tok + "'");
    return v;
}

inline std::vector<double> read_doubles(std::istream& is, std::size_t count) {
    std::vector<double> out(count);
    std::string tok;
    for (auto& v : out) {
        if (!(is >> tok)) throw InvalidConfiguration("checkpoint: truncated numeric block");
        v = parse_double(tok);
    }
    return out;
}

inline void expect_token(std::istream& is, const std::string& want) {
    std::string tok;
    if (!(is >> tok) || tok != want) throw InvalidConfiguration("checkpoint: expected '" + want + "', got '" + tok + "'");
}

}  // namespace detail

inline void save_network(std::ostream& os, const DenseNet& net) {
    os << "net " << net.dims().size();
    for (int d : net.dims()) os << ' ' << d;
    os << "\nparams " << net.num_params() << '\n';
    detail::write_doubles(os, {net.params().data(), static_cast<std::size_t>(net.num_params())});
}

inline DenseNet load_network(std::istream& is) {
    detail::expect_token(is, "net");
    std::size_t n = 0;
    if (!(is >> n) || n < 2) throw InvalidConfiguration("checkpoint: bad layer count");
    std::vector<int> dims(n);
    for (auto& d : dims)
        if (!(is >> d)) throw InvalidConfiguration("checkpoint: bad layer dims");
    DenseNet net(dims);
    detail::expect_token(is, "params");
    Eigen::Index count = 0;
    if (!(is >> count) || count != net.num_params()) throw InvalidConfiguration("checkpoint: parameter count mismatch");
    const auto values = detail::read_doubles(is, static_cast<std::size_t>(count));
    net.mutable_params() = Eigen::Map<const Eigen::VectorXd>(values.data(), count);
    return net;
}

inline void save_adam(std::ostream& os, const std::string& tag, const AdamState& s) {
    os << tag << ' ' << s.m.size() << ' ' << s.t << '\n';
    detail::write_doubles(os, {s.m.data(), static_cast<std::size_t>(s.m.size())});
    detail::write_doubles(os, {s.v.data(), static_cast<std::size_t>(s.v.size())});
}

inline AdamState load_adam(std::istream& is, const std::string& tag, Eigen::Index expected) {
    detail::expect_token(is, tag);
    Eigen::Index n = 0;
    AdamState s;
    if (!(is >> n >> s.t) || n != expected) throw InvalidConfiguration("checkpoint: optimiser state size mismatch");
    const auto m = detail::read_doubles(is, static_cast<std::size_t>(n));
    const auto v = detail::read_doubles(is, static_cast<std::size_t>(n));
    s.m = Eigen::Map<const Eigen::VectorXd>(m.data(), n);
    s.v = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
    return s;
}

}  // namespace reflectsim
