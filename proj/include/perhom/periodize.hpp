#pragma once

#include <optional>
#include <vector>

#include "perhom/model.hpp"

namespace perhom {

/// 1-periodic cutoff with zeta = 0 on Q_{1-2 eta} and zeta = 1 on Q_1 \ Q_{1-eta}.
struct CutoffProfile {
  double eta = 0.1;
};

/// Quintic smoothstep 6t^5 - 15t^4 + 10t^3 on [0, 1], clamped outside.
double smoothstep5(double t);

/// zeta(x) = 1 - prod_i (1 - s(t_i)) with t_i = (|y_i| - (1/2 - eta)) / (eta/2), y = x - round(x).
/// In 1D this is the l-infinity radial profile; the product keeps it C^2 in 2D.
double eval_cutoff(const CutoffProfile& profile, const Vec2& x, int dim);

/// Closed-form C_H0 for H0(p) = C_H0^{-1}|p|^gamma - C_H0, checked on a grid of |p| <= 100.
double choose_H0_constant(const StructuralConstants& constants);

double eval_H0(double C_H0, double gamma, const Vec2& p, int dim);

struct PeriodizedHJB {
  HamiltonianSpec base;
  double L = 1.0;
  CutoffProfile cutoff;
  double H0_constant = 1.0;

  int dimension() const { return base.dimension(); }
};

PeriodizedHJB periodize_hjb(const HamiltonianSpec& base, double L, double eta,
                            std::optional<double> H0_override = std::nullopt);

/// zeta(x / L).
double blend_weight(const PeriodizedHJB& prob, const Vec2& x);
double eval_HL(const PeriodizedHJB& prob, const Vec2& p, const Vec2& x);
Sym2 eval_AL(const PeriodizedHJB& prob, const Vec2& x);

/// H_L(q, x) = a |q|^gamma - W and A_L at a point, the form the solvers consume.
struct HJBNodeData {
  double a = 1.0;
  double W = 0.0;
  Sym2 A;
};

HJBNodeData hjb_node_data(const HamiltonianSpec& spec, const Vec2& x);
HJBNodeData hjb_node_data(const PeriodizedHJB& prob, const Vec2& x);

/// Space-independent elliptic operator F0(X) = max_beta(-tr(A_beta X) + b_beta).
struct F0Operator {
  std::vector<AffinePiece> pieces;
};

/// F0(X) = -((lambda_bar + Lambda_bar) / 2) tr X.
F0Operator default_F0(const StructuralConstants& constants, int dim);
/// F(., x0) frozen at a point.
F0Operator frozen_F0(const EllipticSpec& spec, const Vec2& x0);
double eval_F0(const F0Operator& F0, const Sym2& X, int dim);

struct PeriodizedElliptic {
  EllipticSpec base;
  double L = 1.0;
  CutoffProfile cutoff;
  F0Operator F0;

  int dimension() const { return base.dimension(); }
};

/// Throws InvalidArgument when F0 leaves the base's ellipticity bracket or bound.
PeriodizedElliptic periodize_elliptic(const EllipticSpec& base, double L, double eta,
                                      std::optional<F0Operator> F0 = std::nullopt);

double blend_weight(const PeriodizedElliptic& prob, const Vec2& x);
double eval_FL(const PeriodizedElliptic& prob, const Sym2& X, const Vec2& x);

/// F at a node: w_base * max(base pieces) + w_F0 * max(F0 pieces).
struct EllipticNodeData {
  std::vector<AffinePiece> base;
  double w_base = 1.0;
  std::vector<AffinePiece> f0;
  double w_f0 = 0.0;
};

EllipticNodeData elliptic_node_data(const EllipticSpec& spec, const Vec2& x);
EllipticNodeData elliptic_node_data(const PeriodizedElliptic& prob, const Vec2& x);

struct EtaChoice {
  double eta = 0.25;
  bool clamped = false;
};

/// L^{-a/(4(a+1))}, clamped into (0, 1/4].
EtaChoice eta_schedule_hjb(double L, double a_bar);
/// lambda^{d/(2d+1)}, clamped into (0, 1/4].
EtaChoice eta_schedule_elliptic(double lambda_L, int dim);

}  // namespace perhom
