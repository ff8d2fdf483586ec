#include "perhom/periodize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace perhom {

namespace {

constexpr double kEtaMax = 0.25;

void check_eta_L(double L, double eta) {
  require(std::isfinite(L) && L >= 1.0, "period L must be >= 1");
  require(eta > 0.0 && eta <= kEtaMax, "eta must lie in (0, 1/4]");
}

double reduce_unit(double y) { return y - std::round(y); }

EtaChoice clamp_eta(double raw) {
  if (raw > kEtaMax) return {kEtaMax, true};
  return {raw, false};
}

double max_piece(const std::vector<AffinePiece>& pieces, const Sym2& X, int dim) {
  double best = -std::numeric_limits<double>::infinity();
  for (const AffinePiece& p : pieces) best = std::max(best, -trace_product(p.A, X, dim) + p.b);
  return best;
}

}  // namespace

double smoothstep5(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

double eval_cutoff(const CutoffProfile& profile, const Vec2& x, int dim) {
  const double eta = profile.eta;
  const double inner = 0.5 - eta;
  double keep = 1.0;
  for (int a = 0; a < dim; ++a) {
    const double m = std::abs(reduce_unit(x[a]));
    keep *= 1.0 - smoothstep5((m - inner) / (0.5 * eta));
  }
  return 1.0 - keep;
}

double choose_H0_constant(const StructuralConstants& k) {
  require(k.C_struct >= 1.0 && k.C_corr >= 1.0 && k.gamma > 1.0,
          "choose_H0_constant needs C_struct >= 1, C_corr >= 1, gamma > 1");
  const double g = k.gamma;
  const double lead = std::pow(2.0, g - 1.0) * std::pow(k.C_corr, g);
  const double C = std::max(lead * k.C_struct, lead + k.C_struct);
  // (C_corr (t + 1))^gamma / C - C <= t^gamma / C_struct - C_struct
  for (int i = 0; i <= 10000; ++i) {
    const double t = 0.01 * i;
    const double lhs = std::pow(k.C_corr * (t + 1.0), g) / C - C;
    const double rhs = std::pow(t, g) / k.C_struct - k.C_struct;
    if (lhs > rhs + 1e-9 * (1.0 + std::abs(rhs))) {
      throw std::logic_error("H0 constant fails its defining inequality at |p| = " + std::to_string(t));
    }
  }
  return C;
}

double eval_H0(double C_H0, double gamma, const Vec2& p, int dim) {
  return std::pow(norm(p, dim), gamma) / C_H0 - C_H0;
}

PeriodizedHJB periodize_hjb(const HamiltonianSpec& base, double L, double eta,
                            std::optional<double> H0_override) {
  check_eta_L(L, eta);
  PeriodizedHJB prob{base, L, CutoffProfile{eta}, 0.0};
  if (H0_override) {
    require(*H0_override >= 1.0 && std::isfinite(*H0_override), "H0 constant override must be >= 1");
    prob.H0_constant = *H0_override;
  } else {
    prob.H0_constant = choose_H0_constant(base.constants);
  }
  return prob;
}

double blend_weight(const PeriodizedHJB& prob, const Vec2& x) {
  return eval_cutoff(prob.cutoff, {x[0] / prob.L, x[1] / prob.L}, prob.dimension());
}

double eval_HL(const PeriodizedHJB& prob, const Vec2& p, const Vec2& x) {
  const HJBNodeData n = hjb_node_data(prob, x);
  return n.a * std::pow(norm(p, prob.dimension()), prob.base.gamma) - n.W;
}

Sym2 eval_AL(const PeriodizedHJB& prob, const Vec2& x) { return hjb_node_data(prob, x).A; }

HJBNodeData hjb_node_data(const HamiltonianSpec& spec, const Vec2& x) {
  return {spec.c1, eval_potential(spec.env, x), eval_A(spec, x)};
}

HJBNodeData hjb_node_data(const PeriodizedHJB& prob, const Vec2& x_in) {
  // Reduce into the centered cell first so the evaluation is exactly L-periodic.
  const int d = prob.dimension();
  Vec2 x{0.0, 0.0};
  for (int a = 0; a < d; ++a) x[a] = prob.L * reduce_unit(x_in[a] / prob.L);
  const double z = blend_weight(prob, x);
  if (z == 0.0) return hjb_node_data(prob.base, x);
  const double C = prob.H0_constant;
  if (z == 1.0) return {1.0 / C, C, Sym2{}};
  const HJBNodeData h = hjb_node_data(prob.base, x);
  return {(1.0 - z) * h.a + z / C, (1.0 - z) * h.W + z * C, h.A * (1.0 - z)};
}

F0Operator default_F0(const StructuralConstants& k, int dim) {
  return F0Operator{{AffinePiece{Sym2::scalar(dim, 0.5 * (k.lambda_bar + k.Lambda_bar)), 0.0}}};
}

F0Operator frozen_F0(const EllipticSpec& spec, const Vec2& x0) {
  return F0Operator{elliptic_pieces(spec, x0)};
}

double eval_F0(const F0Operator& F0, const Sym2& X, int dim) { return max_piece(F0.pieces, X, dim); }

PeriodizedElliptic periodize_elliptic(const EllipticSpec& base, double L, double eta,
                                      std::optional<F0Operator> F0) {
  check_eta_L(L, eta);
  const int d = base.dimension();
  const StructuralConstants& k = base.constants;
  F0Operator op = F0 ? *F0 : default_F0(k, d);
  require(!op.pieces.empty() && op.pieces.size() <= kMaxControls, "F0 needs between 1 and 8 pieces");
  for (const AffinePiece& p : op.pieces) {
    require(p.A.min_eigenvalue(d) >= k.lambda_bar * (1.0 - 1e-12) &&
                p.A.max_eigenvalue(d) <= k.Lambda_bar * (1.0 + 1e-12),
            "F0 ellipticity does not match the base operator");
    require(std::abs(p.b) <= k.C_bar * (1.0 + 1e-12) + 1e-15, "F0 source exceeds C_bar");
    if (d == 2) {
      require(std::abs(p.A.xy) <= std::min(p.A.xx, p.A.yy), "F0 matrix must be diagonally dominant");
    }
  }
  return PeriodizedElliptic{base, L, CutoffProfile{eta}, std::move(op)};
}

double blend_weight(const PeriodizedElliptic& prob, const Vec2& x) {
  return eval_cutoff(prob.cutoff, {x[0] / prob.L, x[1] / prob.L}, prob.dimension());
}

double eval_FL(const PeriodizedElliptic& prob, const Sym2& X, const Vec2& x) {
  const EllipticNodeData n = elliptic_node_data(prob, x);
  const int d = prob.dimension();
  double v = 0.0;
  if (n.w_base > 0.0) v += n.w_base * max_piece(n.base, X, d);
  if (n.w_f0 > 0.0) v += n.w_f0 * max_piece(n.f0, X, d);
  return v;
}

EllipticNodeData elliptic_node_data(const EllipticSpec& spec, const Vec2& x) {
  return {elliptic_pieces(spec, x), 1.0, {}, 0.0};
}

EllipticNodeData elliptic_node_data(const PeriodizedElliptic& prob, const Vec2& x_in) {
  const int d = prob.dimension();
  Vec2 x{0.0, 0.0};
  for (int a = 0; a < d; ++a) x[a] = prob.L * reduce_unit(x_in[a] / prob.L);
  const double z = blend_weight(prob, x);
  if (z == 0.0) return elliptic_node_data(prob.base, x);
  if (z == 1.0) return {{}, 0.0, prob.F0.pieces, 1.0};
  return {elliptic_pieces(prob.base, x), 1.0 - z, prob.F0.pieces, z};
}

EtaChoice eta_schedule_hjb(double L, double a_bar) {
  require(L >= 1.0, "eta schedule needs L >= 1");
  require(a_bar > 0.0 && a_bar < 1.0, "HJB rate exponent must lie in (0, 1)");
  return clamp_eta(std::pow(L, -a_bar / (4.0 * (a_bar + 1.0))));
}

EtaChoice eta_schedule_elliptic(double lambda_L, int dim) {
  require(lambda_L > 0.0 && lambda_L <= 1.0, "lambda(L) must lie in (0, 1]");
  require(dim == 1 || dim == 2, "dimension must be 1 or 2");
  return clamp_eta(std::pow(lambda_L, double(dim) / (2.0 * dim + 1.0)));
}

}  // namespace perhom
