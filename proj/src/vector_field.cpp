#include "odeadj/vector_field.hpp"

#include <cmath>

namespace odeadj {

VectorField::VectorField(std::size_t state_dim, StateVector params)
    : dim_(state_dim), params_(std::move(params)) {
    require(dim_ >= 1, "vector field: state_dim must be positive");
}

void VectorField::eval_f(double t, std::span<const double> z, std::span<double> out) const {
    require(z.size() == dim_ && out.size() == dim_, "eval_f: dimension mismatch");
    do_eval_f(t, z, out);
}

void VectorField::vjp_z(double t, std::span<const double> z, std::span<const double> v,
                        std::span<double> out) const {
    require(z.size() == dim_ && v.size() == dim_ && out.size() == dim_, "vjp_z: dimension mismatch");
    do_vjp_z(t, z, v, out);
}

void VectorField::vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                            std::span<double> out) const {
    require(z.size() == dim_ && v.size() == dim_ && out.size() == params_.size(),
            "vjp_theta: dimension mismatch");
    do_vjp_theta(t, z, v, out);
}

double VectorField::vjp_t(double t, std::span<const double> z, std::span<const double> v) const {
    require(z.size() == dim_ && v.size() == dim_, "vjp_t: dimension mismatch");
    return do_vjp_t(t, z, v);
}

StateVector VectorField::eval_f(double t, std::span<const double> z) const {
    StateVector out(dim_);
    eval_f(t, z, out);
    return out;
}

StateVector VectorField::vjp_z(double t, std::span<const double> z, std::span<const double> v) const {
    StateVector out(dim_);
    vjp_z(t, z, v, out);
    return out;
}

StateVector VectorField::vjp_theta(double t, std::span<const double> z, std::span<const double> v) const {
    StateVector out(params_.size());
    vjp_theta(t, z, v, out);
    return out;
}

// ---------------------------------------------------------------------------
// LinearField

LinearField::LinearField(std::size_t state_dim, StateVector matrix_row_major)
    : VectorField(state_dim, std::move(matrix_row_major)) {
    require(param_count() == state_dim * state_dim, "linear field: expected d*d matrix entries");
}

std::unique_ptr<VectorField> LinearField::with_params(StateVector params) const {
    return std::make_unique<LinearField>(state_dim(), std::move(params));
}

void LinearField::do_eval_f(double, std::span<const double> z, std::span<double> out) const {
    const auto d = state_dim();
    const auto a = params();
    for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += a[i * d + j] * z[j];
        out[i] = acc;
    }
}

void LinearField::do_vjp_z(double, std::span<const double>, std::span<const double> v,
                           std::span<double> out) const {
    const auto d = state_dim();
    const auto a = params();
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += v[i] * a[i * d + j];
        out[j] = acc;
    }
}

void LinearField::do_vjp_theta(double, std::span<const double> z, std::span<const double> v,
                               std::span<double> out) const {
    const auto d = state_dim();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i] * z[j];
}

// ---------------------------------------------------------------------------
// MlpField

MlpField::MlpField(std::size_t state_dim, std::size_t hidden, StateVector params)
    : VectorField(state_dim, std::move(params)), hidden_(hidden) {
    require(hidden_ >= 1, "mlp field: hidden width must be positive");
    require(param_count() == param_count_for(state_dim, hidden), "mlp field: wrong parameter count");
}

std::unique_ptr<VectorField> MlpField::with_params(StateVector params) const {
    return std::make_unique<MlpField>(state_dim(), hidden_, std::move(params));
}

void MlpField::hidden_activation(std::span<const double> z, std::span<double> act) const {
    const auto d = state_dim();
    const auto h = hidden_;
    const auto th = params();
    const double* w1 = th.data();
    const double* b1 = w1 + h * d;
    for (std::size_t i = 0; i < h; ++i) {
        double acc = b1[i];
        for (std::size_t j = 0; j < d; ++j) acc += w1[i * d + j] * z[j];
        act[i] = std::tanh(acc);
    }
}

void MlpField::do_eval_f(double, std::span<const double> z, std::span<double> out) const {
    const auto d = state_dim();
    const auto h = hidden_;
    const double* w2 = params().data() + h * d + h;
    const double* b2 = w2 + d * h;

    StateVector act(h);
    hidden_activation(z, act);
    for (std::size_t k = 0; k < d; ++k) {
        double acc = b2[k];
        for (std::size_t i = 0; i < h; ++i) acc += w2[k * h + i] * act[i];
        out[k] = acc;
    }
}

void MlpField::do_vjp_z(double, std::span<const double> z, std::span<const double> v,
                        std::span<double> out) const {
    const auto d = state_dim();
    const auto h = hidden_;
    const double* w1 = params().data();
    const double* w2 = w1 + h * d + h;

    StateVector act(h);
    hidden_activation(z, act);
    // s = (W2^T v) * tanh'(pre)
    StateVector s(h);
    for (std::size_t i = 0; i < h; ++i) {
        double g = 0.0;
        for (std::size_t k = 0; k < d; ++k) g += v[k] * w2[k * h + i];
        s[i] = g * (1.0 - act[i] * act[i]);
    }
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < h; ++i) acc += s[i] * w1[i * d + j];
        out[j] = acc;
    }
}

void MlpField::do_vjp_theta(double, std::span<const double> z, std::span<const double> v,
                            std::span<double> out) const {
    const auto d = state_dim();
    const auto h = hidden_;
    const double* w2 = params().data() + h * d + h;

    StateVector act(h);
    hidden_activation(z, act);

    double* g_w1 = out.data();
    double* g_b1 = g_w1 + h * d;
    double* g_w2 = g_b1 + h;
    double* g_b2 = g_w2 + d * h;
    for (std::size_t i = 0; i < h; ++i) {
        double g = 0.0;
        for (std::size_t k = 0; k < d; ++k) g += v[k] * w2[k * h + i];
        const double s = g * (1.0 - act[i] * act[i]);
        for (std::size_t j = 0; j < d; ++j) g_w1[i * d + j] = s * z[j];
        g_b1[i] = s;
    }
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < h; ++i) g_w2[k * h + i] = v[k] * act[i];
        g_b2[k] = v[k];
    }
}

// ---------------------------------------------------------------------------
// ForcedOscillatorField

ForcedOscillatorField::ForcedOscillatorField(StateVector params, double omega)
    : VectorField(2, std::move(params)), omega_(omega) {
    require(param_count() == 4, "forced oscillator: expected theta = (m, k, c, u)");
    require(std::isfinite(omega_), "forced oscillator: omega must be finite");
}

std::unique_ptr<VectorField> ForcedOscillatorField::with_params(StateVector params) const {
    return std::make_unique<ForcedOscillatorField>(std::move(params), omega_);
}

void ForcedOscillatorField::do_eval_f(double t, std::span<const double> z, std::span<double> out) const {
    const auto th = params();
    const double m = th[0], k = th[1], c = th[2], u = th[3];
    out[0] = z[1] / m;
    out[1] = -k * z[0] - c * z[1] + u * std::sin(omega_ * t);
}

void ForcedOscillatorField::do_vjp_z(double, std::span<const double>, std::span<const double> v,
                                     std::span<double> out) const {
    const auto th = params();
    const double m = th[0], k = th[1], c = th[2];
    out[0] = -k * v[1];
    out[1] = v[0] / m - c * v[1];
}

void ForcedOscillatorField::do_vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                                         std::span<double> out) const {
    const double m = params()[0];
    out[0] = -v[0] * z[1] / (m * m);
    out[1] = -v[1] * z[0];
    out[2] = -v[1] * z[1];
    out[3] = v[1] * std::sin(omega_ * t);
}

double ForcedOscillatorField::do_vjp_t(double t, std::span<const double>, std::span<const double> v) const {
    const double u = params()[3];
    return v[1] * u * omega_ * std::cos(omega_ * t);
}

// ---------------------------------------------------------------------------
// CorruptedVjpField

CorruptedVjpField::CorruptedVjpField(std::unique_ptr<VectorField> inner, double relative_error)
    : VectorField(inner->state_dim(), StateVector(inner->params().begin(), inner->params().end())),
      inner_(std::move(inner)),
      relative_error_(relative_error) {}

std::unique_ptr<VectorField> CorruptedVjpField::with_params(StateVector params) const {
    return std::make_unique<CorruptedVjpField>(inner_->with_params(std::move(params)), relative_error_);
}

void CorruptedVjpField::do_eval_f(double t, std::span<const double> z, std::span<double> out) const {
    inner_->eval_f(t, z, out);
}

void CorruptedVjpField::do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                                 std::span<double> out) const {
    inner_->vjp_z(t, z, v, out);
}

void CorruptedVjpField::do_vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                                     std::span<double> out) const {
    inner_->vjp_theta(t, z, v, out);
    for (auto& x : out) x *= 1.0 + relative_error_;
}

double CorruptedVjpField::do_vjp_t(double t, std::span<const double> z, std::span<const double> v) const {
    return inner_->vjp_t(t, z, v);
}

// ---------------------------------------------------------------------------
// FrozenField

FrozenField::FrozenField(std::unique_ptr<VectorField> inner)
    : VectorField(inner->state_dim(), {}), inner_(std::move(inner)) {}

std::unique_ptr<VectorField> FrozenField::with_params(StateVector params) const {
    require(params.empty(), "frozen field has no parameters");
    auto copy = std::make_unique<FrozenField>(*this);
    return copy;
}

void FrozenField::do_eval_f(double t, std::span<const double> z, std::span<double> out) const {
    inner_->eval_f(t, z, out);
}

void FrozenField::do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                           std::span<double> out) const {
    inner_->vjp_z(t, z, v, out);
}

double FrozenField::do_vjp_t(double t, std::span<const double> z, std::span<const double> v) const {
    return inner_->vjp_t(t, z, v);
}

}  // namespace odeadj
