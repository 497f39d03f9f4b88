#pragma once

#include <memory>
#include <span>
#include <string_view>

#include "odeadj/types.hpp"

namespace odeadj {

/// Parameterized right-hand side f(t, z, theta) with hand-derived
/// vector-Jacobian products. All VJPs take the cotangent on the left, so
/// vjp_z(t, z, v)[j] = sum_i v_i df_i/dz_j.
///
/// Fields are immutable once built; `with_params` produces a sibling field
/// that differs only in theta.
class VectorField {
public:
    virtual ~VectorField() = default;

    std::size_t state_dim() const noexcept { return dim_; }
    std::size_t param_count() const noexcept { return params_.size(); }
    std::span<const double> params() const noexcept { return params_; }

    virtual std::string_view kind() const noexcept = 0;
    virtual std::unique_ptr<VectorField> with_params(StateVector params) const = 0;

    // Output-buffer forms, used on the solver hot path.
    void eval_f(double t, std::span<const double> z, std::span<double> out) const;
    void vjp_z(double t, std::span<const double> z, std::span<const double> v, std::span<double> out) const;
    void vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                   std::span<double> out) const;
    double vjp_t(double t, std::span<const double> z, std::span<const double> v) const;

    StateVector eval_f(double t, std::span<const double> z) const;
    StateVector vjp_z(double t, std::span<const double> z, std::span<const double> v) const;
    StateVector vjp_theta(double t, std::span<const double> z, std::span<const double> v) const;

protected:
    VectorField(std::size_t state_dim, StateVector params);

    virtual void do_eval_f(double t, std::span<const double> z, std::span<double> out) const = 0;
    virtual void do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                          std::span<double> out) const = 0;
    virtual void do_vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                              std::span<double> out) const = 0;
    virtual double do_vjp_t(double t, std::span<const double> z, std::span<const double> v) const = 0;

private:
    std::size_t dim_;
    StateVector params_;
};

/// f(t, z) = A z with A (d x d, row-major) as the parameter vector.
class LinearField final : public VectorField {
public:
    LinearField(std::size_t state_dim, StateVector matrix_row_major);

    std::string_view kind() const noexcept override { return "linear"; }
    std::unique_ptr<VectorField> with_params(StateVector params) const override;

private:
    void do_eval_f(double t, std::span<const double> z, std::span<double> out) const override;
    void do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                  std::span<double> out) const override;
    void do_vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                      std::span<double> out) const override;
    double do_vjp_t(double, std::span<const double>, std::span<const double>) const override { return 0.0; }
};

/// One hidden tanh layer: f(z) = W2 tanh(W1 z + b1) + b2.
///
/// Parameter layout: W1 (h x d, row-major) | b1 (h) | W2 (d x h, row-major) | b2 (d).
class MlpField final : public VectorField {
public:
    MlpField(std::size_t state_dim, std::size_t hidden, StateVector params);

    static std::size_t param_count_for(std::size_t state_dim, std::size_t hidden) noexcept {
        return 2 * hidden * state_dim + hidden + state_dim;
    }

    std::size_t hidden() const noexcept { return hidden_; }
    std::string_view kind() const noexcept override { return "mlp"; }
    std::unique_ptr<VectorField> with_params(StateVector params) const override;

private:
    void hidden_activation(std::span<const double> z, std::span<double> act) const;
    void do_eval_f(double t, std::span<const double> z, std::span<double> out) const override;
    void do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                  std::span<double> out) const override;
    void do_vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                      std::span<double> out) const override;
    double do_vjp_t(double, std::span<const double>, std::span<const double>) const override { return 0.0; }

    std::size_t hidden_;
};

/// Damped, sinusoidally forced oscillator on z = (q, p):
///   dq/dt = p / m,   dp/dt = -k q - c p + u sin(omega t),
/// with theta = (m, k, c, u). The forcing frequency omega is fixed.
class ForcedOscillatorField final : public VectorField {
public:
    ForcedOscillatorField(StateVector params, double omega);

    double omega() const noexcept { return omega_; }
    std::string_view kind() const noexcept override { return "forced_oscillator"; }
    std::unique_ptr<VectorField> with_params(StateVector params) const override;

private:
    void do_eval_f(double t, std::span<const double> z, std::span<double> out) const override;
    void do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                  std::span<double> out) const override;
    void do_vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                      std::span<double> out) const override;
    double do_vjp_t(double t, std::span<const double> z, std::span<const double> v) const override;

    double omega_;
};

/// Test hook: forwards to an inner field but scales vjp_theta by
/// (1 + relative_error). Used as the negative control of gradient checks.
class CorruptedVjpField final : public VectorField {
public:
    CorruptedVjpField(std::unique_ptr<VectorField> inner, double relative_error);

    std::string_view kind() const noexcept override { return inner_->kind(); }
    std::unique_ptr<VectorField> with_params(StateVector params) const override;

private:
    void do_eval_f(double t, std::span<const double> z, std::span<double> out) const override;
    void do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                  std::span<double> out) const override;
    void do_vjp_theta(double t, std::span<const double> z, std::span<const double> v,
                      std::span<double> out) const override;
    double do_vjp_t(double t, std::span<const double> z, std::span<const double> v) const override;

    std::unique_ptr<VectorField> inner_;
    double relative_error_;
};

/// Bakes an inner field's parameters in as constants, leaving p = 0.
class FrozenField final : public VectorField {
public:
    explicit FrozenField(std::unique_ptr<VectorField> inner);

    std::string_view kind() const noexcept override { return inner_->kind(); }
    std::unique_ptr<VectorField> with_params(StateVector params) const override;

private:
    void do_eval_f(double t, std::span<const double> z, std::span<double> out) const override;
    void do_vjp_z(double t, std::span<const double> z, std::span<const double> v,
                  std::span<double> out) const override;
    void do_vjp_theta(double, std::span<const double>, std::span<const double>, std::span<double>) const override {}
    double do_vjp_t(double t, std::span<const double> z, std::span<const double> v) const override;

    std::shared_ptr<const VectorField> inner_;
};

}  // namespace odeadj
