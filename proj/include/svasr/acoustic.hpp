#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svasr/error.hpp"
#include "svasr/log_math.hpp"

namespace svasr {

/// Diagonal-covariance Gaussian density.
template <typename Scalar>
struct Gaussian {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector mean;
  Vector variance;
  /// -0.5 * sum_d (ln 2pi + ln var_d)
  Scalar log_norm = 0;

  Gaussian() = default;
  Gaussian(Vector m, Vector v) : mean(std::move(m)), variance(std::move(v)) { update_norm(); }

  Eigen::Index dim() const { return mean.size(); }

  void update_norm() {
    const Scalar ln_two_pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    log_norm = Scalar(-0.5) * (Scalar(mean.size()) * ln_two_pi + variance.array().log().sum());
  }
};

template <typename Scalar, typename Derived>
Scalar log_gauss(const Gaussian<Scalar>& g, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != g.dim()) throw DomainError("observation dimension does not match Gaussian");
  return g.log_norm -
         Scalar(0.5) * ((x.template cast<Scalar>() - g.mean).array().square() / g.variance.array()).sum();
}

template <typename Scalar>
struct MixtureComponent {
  Scalar weight = 1;
  Gaussian<Scalar> gaussian;
};

/// Emission density of one HMM state.
template <typename Scalar>
struct GmmState {
  std::vector<MixtureComponent<Scalar>> components;

  Eigen::Index dim() const { return components.empty() ? 0 : components.front().gaussian.dim(); }
};

template <typename Scalar, typename Derived>
Scalar log_emission(const GmmState<Scalar>& s, const Eigen::MatrixBase<Derived>& x) {
  Scalar acc = kLogZero<Scalar>;
  for (const auto& c : s.components)
    acc = log_add(acc, safe_log(c.weight) + log_gauss(c.gaussian, x));
  return acc;
}

/// Left-to-right phone model. Transition indices: 0 = non-emitting entry,
/// 1..N = emitting states, N+1 = non-emitting exit.
template <typename Scalar>
struct PhoneHmm {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  std::string name;
  std::vector<GmmState<Scalar>> states;
  Matrix log_trans;

  int n_states() const { return static_cast<int>(states.size()); }
  int exit_index() const { return n_states() + 1; }
  Eigen::Index dim() const { return states.empty() ? 0 : states.front().dim(); }
  /// Entry connects straight to exit, so the model can consume zero frames.
  bool is_tee() const { return log_trans(0, exit_index()) > kLogZero<Scalar>; }
};

using GaussianD = Gaussian<double>;
using GmmStateD = GmmState<double>;
using Hmm = PhoneHmm<double>;

/// Strict left-to-right topology with self-loops and no skips. A positive tee
/// probability adds the direct entry-to-exit transition.
template <typename Scalar = double>
PhoneHmm<Scalar> make_left_to_right(std::string name, int n_states, Eigen::Index dim,
                                    Scalar tee_prob = 0, Scalar self_loop = Scalar(0.6)) {
  if (n_states < 1) throw DomainError("an HMM needs at least one emitting state");
  if (tee_prob < 0 || tee_prob >= 1) throw DomainError("tee probability must lie in [0, 1)");
  using Vector = typename Gaussian<Scalar>::Vector;
  PhoneHmm<Scalar> h;
  h.name = std::move(name);
  h.states.assign(std::size_t(n_states),
                  GmmState<Scalar>{{{Scalar(1), Gaussian<Scalar>(Vector::Zero(dim), Vector::Ones(dim))}}});
  const int size = n_states + 2;
  typename PhoneHmm<Scalar>::Matrix p = PhoneHmm<Scalar>::Matrix::Zero(size, size);
  p(0, 1) = 1 - tee_prob;
  p(0, size - 1) = tee_prob;
  for (int i = 1; i <= n_states; ++i) {
    p(i, i) = self_loop;
    p(i, i + 1) = 1 - self_loop;
  }
  h.log_trans = p.unaryExpr([](Scalar v) { return safe_log(v); });
  return h;
}

/// Per-state log emission for every frame: result(j, t) = log b_j(o_t).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> emission_table(
    const PhoneHmm<Scalar>& h, const Eigen::MatrixBase<Derived>& obs) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> b(h.n_states(), obs.cols());
  for (int j = 0; j < h.n_states(); ++j)
    for (Eigen::Index t = 0; t < obs.cols(); ++t) b(j, t) = log_emission(h.states[j], obs.col(t));
  return b;
}

template <typename Scalar>
struct LatticeTable {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values;  // N x T
  Scalar total = kLogZero<Scalar>;
};

template <typename Scalar>
LatticeTable<Scalar> forward_table(const PhoneHmm<Scalar>& h,
                                   const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& b) {
  const int n = h.n_states();
  const Eigen::Index T = b.cols();
  const auto& a = h.log_trans;
  LatticeTable<Scalar> out;
  out.values.setConstant(n, T, kLogZero<Scalar>);
  if (T == 0) {
    out.total = a(0, n + 1);
    return out;
  }
  for (int j = 0; j < n; ++j) out.values(j, 0) = a(0, j + 1) + b(j, 0);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (int j = 0; j < n; ++j) {
      Scalar acc = kLogZero<Scalar>;
      for (int i = 0; i < n; ++i) acc = log_add(acc, out.values(i, t - 1) + a(i + 1, j + 1));
      out.values(j, t) = acc + b(j, t);
    }
  }
  for (int i = 0; i < n; ++i) out.total = log_add(out.total, out.values(i, T - 1) + a(i + 1, n + 1));
  return out;
}

template <typename Scalar>
LatticeTable<Scalar> backward_table(const PhoneHmm<Scalar>& h,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& b) {
  const int n = h.n_states();
  const Eigen::Index T = b.cols();
  const auto& a = h.log_trans;
  LatticeTable<Scalar> out;
  out.values.setConstant(n, T, kLogZero<Scalar>);
  if (T == 0) {
    out.total = a(0, n + 1);
    return out;
  }
  for (int i = 0; i < n; ++i) out.values(i, T - 1) = a(i + 1, n + 1);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (int i = 0; i < n; ++i) {
      Scalar acc = kLogZero<Scalar>;
      for (int j = 0; j < n; ++j) acc = log_add(acc, a(i + 1, j + 1) + b(j, t + 1) + out.values(j, t + 1));
      out.values(i, t) = acc;
    }
  }
  for (int j = 0; j < n; ++j) out.total = log_add(out.total, a(0, j + 1) + b(j, 0) + out.values(j, 0));
  return out;
}

/// log P(obs | h) over all entry-to-exit paths; -inf when no path fits.
template <typename Scalar, typename Derived>
Scalar forward_log(const PhoneHmm<Scalar>& h, const Eigen::MatrixBase<Derived>& obs) {
  return forward_table(h, emission_table(h, obs)).total;
}

template <typename Scalar, typename Derived>
LatticeTable<Scalar> backward_log(const PhoneHmm<Scalar>& h, const Eigen::MatrixBase<Derived>& obs) {
  return backward_table(h, emission_table(h, obs));
}

/// State posteriors gamma(j, t); each column sums to one.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> occupancy(const LatticeTable<Scalar>& fwd,
                                                                const LatticeTable<Scalar>& bwd) {
  return (fwd.values + bwd.values).array() - fwd.total;
}

template <typename Scalar>
struct Alignment {
  /// Emitting state (0-based) occupied at each frame; empty when no path exists.
  std::vector<int> states;
  Scalar log_prob = kLogZero<Scalar>;
};

/// Best state path. Ties go to the lower predecessor index and, at the exit, the lower final state.
template <typename Scalar>
Alignment<Scalar> viterbi_table(const PhoneHmm<Scalar>& h,
                                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& b) {
  const int n = h.n_states();
  const Eigen::Index T = b.cols();
  const auto& a = h.log_trans;
  Alignment<Scalar> out;
  if (T == 0) {
    out.log_prob = a(0, n + 1);
    return out;
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> delta =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, T, kLogZero<Scalar>);
  Eigen::MatrixXi back = Eigen::MatrixXi::Constant(n, T, -1);
  for (int j = 0; j < n; ++j) delta(j, 0) = a(0, j + 1) + b(j, 0);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (int j = 0; j < n; ++j) {
      Scalar best = kLogZero<Scalar>;
      int arg = -1;
      for (int i = 0; i < n; ++i) {
        const Scalar v = delta(i, t - 1) + a(i + 1, j + 1);
        if (v > best) best = v, arg = i;
      }
      if (arg >= 0) {
        delta(j, t) = best + b(j, t);
        back(j, t) = arg;
      }
    }
  }
  int last = -1;
  for (int i = 0; i < n; ++i) {
    const Scalar v = delta(i, T - 1) + a(i + 1, n + 1);
    if (v > out.log_prob) out.log_prob = v, last = i;
  }
  if (last < 0) return out;
  out.states.assign(std::size_t(T), 0);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    out.states[std::size_t(t)] = last;
    last = back(last, t);
  }
  return out;
}

template <typename Scalar, typename Derived>
Alignment<Scalar> viterbi_align(const PhoneHmm<Scalar>& h, const Eigen::MatrixBase<Derived>& obs) {
  return viterbi_table(h, emission_table(h, obs));
}

/// Throws DomainError when transition rows, mixture weights or variances violate the model invariants.
void check_model(const Hmm& h, double tolerance = 1e-9);

// ---------------------------------------------------------------------------

/// One model per phone, all of the same feature dimension.
struct HmmSet {
  Eigen::Index dim = 0;
  std::map<std::string, Hmm> models;

  bool contains(const std::string& phone) const { return models.count(phone) != 0; }
  const Hmm& at(const std::string& phone) const;
  void add(Hmm h);
};

/// Throws naming every phone missing from the set.
void require_phones(const HmmSet& set, const std::vector<std::string>& phones);

/// Line-oriented text format; values printed with 17 significant digits.
void write_hmmset(const HmmSet& set, const std::filesystem::path& path);
HmmSet read_hmmset(const std::filesystem::path& path);
std::string format_hmmset(const HmmSet& set);
HmmSet parse_hmmset(const std::string& text);

}  // namespace svasr
