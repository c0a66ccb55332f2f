#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "star/dataset.hpp"
#include "star/matrix.hpp"
#include "star/rng.hpp"

namespace star::theory {

// A finite function class evaluated on a sample: row i holds f_i(X_1..X_n).
struct FiniteClass {
    MatD values;             // N x n
    std::vector<double> Y;   // length n

    std::size_t members() const { return values.rows; }
    std::size_t points() const { return values.cols; }
};

// (1/n) sum (v_i - Y_i)^2
double empirical_risk(const std::vector<double>& v, const std::vector<double>& Y);
double empirical_risk_row(const FiniteClass& cls, std::size_t row);

// { i : risk_i <= min_j risk_j + delta }
std::vector<std::size_t> delta_erm_set(const FiniteClass& cls, double delta);

struct StarMin {
    std::vector<double> fhat;    // length n
    std::vector<double> lambda;  // length d+1: weights on erms, then the free member
    std::size_t class_row = 0;   // chosen free member f
    double risk = 0.0;
    double delta2 = 0.0;         // certified bound on risk(fhat) - min over the full star set
};

// Exhaustive search of the Star_d set over all class rows and a simplex grid
// of spacing 1/grid_res. delta2 is a certified grid-gap bound (Lipschitz
// argument), valid as the Delta_2 of the returned minimizer.
StarMin star_set_minimize(const FiniteClass& cls, const std::vector<std::size_t>& erms,
                          int grid_res);

struct StarInstance {
    FiniteClass cls;
    std::vector<std::size_t> erms;
    std::vector<double> fhat;
    double delta1 = 0.0;
    double delta2 = 0.0;
};

// min over class rows h of
//   E_hat(h-Y)^2 - E_hat(fhat-Y)^2 - c * E_hat(fhat-h)^2 + additive
double geometric_margin(const StarInstance& inst, double c, double additive);

// Additive slack for the Delta-minimizer inequality (c = 1/36).
inline double additive_delta_form(double c, double delta1, double delta2) {
    return 2.0 * (1.0 + c) * (delta1 + delta2);
}

// Additive slack for the exact-minimizer inequality (c = 1/18) when the
// second step is only delta2-optimal. Some contact point f'' satisfying the
// exact inequality lies within sqrt(delta1 + delta2) of fhat in ||.||_n and
// has the minimal second-step risk, which costs
//   2 d1 + d2 + c (d1 + d2) + 2 c sqrt(d1 + d2) (reach + sqrt(d1 + d2)),
// with reach = max_h ||fhat - h||_n.
double additive_exact_form(const StarInstance& inst, double c);

struct OffsetResult {
    double value = 0.0;
    double stderr = 0.0;  // 0 for the exact enumeration
};

// E_sigma max_v (1/n) sum_i [sigma_i xi_i v_i - C v_i^2], exact over all 2^n
// sign vectors (n <= 20).
OffsetResult offset_sup_exact(const FiniteClass& cls, const std::vector<double>& xi, double C);
OffsetResult offset_sup_mc(const FiniteClass& cls, const std::vector<double>& xi, double C,
                           std::size_t trials, Rng& rng);

// One draw of the offset maximum at a given sign vector.
double offset_max_at_sigma(const FiniteClass& cls, const std::vector<double>& xi, double C,
                           const std::vector<int>& sigma);

// M = sup over nonzero rows of sum v^2 xi^2 / (2 C sum v^2); zero rows are
// excluded, an all-zero class yields 0.
double lemma9_m_constant(const FiniteClass& cls, const std::vector<double>& xi, double C);
// M log N / n, or M (log N + log(1/delta)) / n when delta is given.
double lemma9_bound(const FiniteClass& cls, const std::vector<double>& xi, double C,
                    std::optional<double> delta = std::nullopt);

struct KmConstants {
    double K = 0.0;
    double M = 0.0;
};

// K = 2 (sqrt(sum xi^2 / n) + C); M = sup over nonzero rows of
// 4 sum h^2 xi^2 / (C sum h^2).
KmConstants km_constants(const FiniteClass& H, const std::vector<double>& xi, double C);

struct TheoryConstants {
    double A = 0.0;  // sup_h E h^4 / (E h^2)^2 over a reference sample
    double B = 0.0;  // E xi^4 over a reference sample
    double K = 0.0;
    double M = 0.0;
    double C = 0.0;
};

// The offset coefficient of the expectation bound:
//   C = min( c / (4 F'), c / (4 range (2 + c)) ),
// F' bounding sup |Y - f| and range bounding sup |f| (V(L+1) for the
// sparse ReLU class).
double offset_coefficient(double c, double f_prime, double range_bound);

TheoryConstants theory_constants(const MatD& H_ref, const std::vector<double>& xi_ref,
                                 const FiniteClass& H_train, const std::vector<double>& xi_train,
                                 double C);

struct CoverInputs {
    int L = 1;
    std::vector<int> widths;  // p_0..p_{L+1}
    long s = 0;
    int d = 1;
    double epsilon = 1.0;
    long n = 1;
};

// (s+1) * ln(2 * eps^-1 * (L+1) * V^2)
double cover_bound_sparse(const CoverInputs& in);
// (d+2) [ log N2(F, eps/(3(d+1))) + log(6 (d+1) V (L+1) / eps) ]
double cover_bound_H(const CoverInputs& in);
// The fully expanded eps = 1/n corollary form.
double cover_bound_H_expanded(const CoverInputs& in);

// sqrt((1/n) sum (u_i - v_i)^2)
double empirical_l2(const double* u, const double* v, std::size_t n);

// Greedy farthest-point net: every input point ends within eps of the net;
// returned indices are pairwise > eps apart.
std::vector<std::size_t> greedy_cover(const MatD& points, double eps);

// Rows (f - f*) + sum_i lambda_i (f_i - f) with lambda uniform on the slack
// simplex (sum <= 1) and f, f_i uniform class rows.
FiniteClass hull_H_sample(const FiniteClass& cls, std::size_t f_star_row, int d, Rng& rng,
                          std::size_t count);

struct IsometryFamily {
    std::size_t members = 0;
    int dim = 0;
    std::function<double(std::size_t member, const double* x)> eval;
    std::vector<double> analytic_Ef2;  // empty -> estimated on a reference sample
};

struct IsometryEstimate {
    double probability = 0.0;
    double stderr = 0.0;
    std::size_t excluded = 0;  // members with E f^2 = 0
    std::size_t trials = 0;
};

// Monte-Carlo estimate of P( inf_f (1/n) sum f^2(X_i) / E f^2 >= 1 - eta ).
IsometryEstimate lower_isometry_estimate(const IsometryFamily& family, InputDist dist,
                                         std::size_t n, double eta, std::size_t trials,
                                         std::uint64_t seed, std::size_t reference_n = 100000);

struct Corollary3Result {
    double margin = 0.0;   // RHS - LHS of the corollary
    double stderr = 0.0;   // MC error of the reference-sample expectations
    std::size_t f_star_row = 0;
};

// Evaluates the deterministic excess-risk bound. Population expectations use
// `ref` (the same class on a disjoint reference sample, with its targets);
// f* is the population risk minimizer over the class.
Corollary3Result corollary3_margin(const StarInstance& inst, const StarMin& fit,
                                   const FiniteClass& ref, double c);

// E (fhat - Y)^2 - E (f* - Y)^2 on fresh reference points; with independent
// additive noise this equals E (fhat - f*)^2, which is what gets computed
// (the noise variance cancels analytically).
double excess_risk_synthetic(const std::function<std::vector<double>(const MatD&)>& predict_fn,
                             const SyntheticSpec& synth, std::size_t reference_n,
                             std::uint64_t seed);

}  // namespace star::theory
