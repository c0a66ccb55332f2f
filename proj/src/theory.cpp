#include "star/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "star/net.hpp"

namespace star::theory {

double empirical_risk(const std::vector<double>& v, const std::vector<double>& Y) {
    if (v.size() != Y.size()) throw ShapeError("empirical_risk: length mismatch");
    if (v.empty()) throw ShapeError("empirical_risk: empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - Y[i];
        acc += d * d;
    }
    return acc / static_cast<double>(v.size());
}

double empirical_risk_row(const FiniteClass& cls, std::size_t row) {
    const std::size_t n = cls.points();
    double acc = 0.0;
    const double* r = cls.values.row(row);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = r[i] - cls.Y[i];
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

std::vector<std::size_t> delta_erm_set(const FiniteClass& cls, double delta) {
    if (delta < 0.0) throw ConfigError("delta_erm_set: delta must be >= 0");
    const std::size_t N = cls.members();
    std::vector<double> risks(N);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) {
        risks[i] = empirical_risk_row(cls, i);
        best = std::min(best, risks[i]);
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < N; ++i)
        if (risks[i] <= best + delta) out.push_back(i);
    return out;
}

namespace {

double norm_n(const std::vector<double>& u) {
    double acc = 0.0;
    for (double x : u) acc += x * x;
    return std::sqrt(acc / static_cast<double>(u.size()));
}

// Enumerates lambda vectors (l_1..l_d), l_i = k_i/g, sum k_i <= g.
void enumerate_simplex(int d, int g, std::vector<int>& ks, int used, int at,
                       const std::function<void(const std::vector<int>&)>& visit) {
    if (at == d) {
        visit(ks);
        return;
    }
    for (int k = 0; k + used <= g; ++k) {
        ks[at] = k;
        enumerate_simplex(d, g, ks, used + k, at + 1, visit);
    }
}

}  // namespace

StarMin star_set_minimize(const FiniteClass& cls, const std::vector<std::size_t>& erms,
                          int grid_res) {
    if (grid_res < 2) throw ConfigError("star_set_minimize: grid_res must be >= 2");
    if (erms.empty()) throw ConfigError("star_set_minimize: need at least one erm");
    const std::size_t n = cls.points(), N = cls.members(), d = erms.size();

    StarMin best;
    best.risk = std::numeric_limits<double>::infinity();

    std::vector<double> base(n);
    std::vector<int> ks(d, 0);
    const double g = static_cast<double>(grid_res);

    enumerate_simplex(static_cast<int>(d), grid_res, ks, 0, 0, [&](const std::vector<int>& k) {
        int used = 0;
        for (int ki : k) used += ki;
        const double lam_free = 1.0 - static_cast<double>(used) / g;
        std::fill(base.begin(), base.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double li = static_cast<double>(k[i]) / g;
            if (li == 0.0) continue;
            const double* row = cls.values.row(erms[i]);
            for (std::size_t t = 0; t < n; ++t) base[t] += li * row[t];
        }
        for (std::size_t f = 0; f < N; ++f) {
            const double* row = cls.values.row(f);
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                const double val = base[t] + lam_free * row[t];
                const double diff = val - cls.Y[t];
                acc += diff * diff;
            }
            acc /= static_cast<double>(n);
            if (acc < best.risk) {
                best.risk = acc;
                best.class_row = f;
                best.lambda.assign(d + 1, 0.0);
                for (std::size_t i = 0; i < d; ++i)
                    best.lambda[i] = static_cast<double>(k[i]) / g;
                best.lambda[d] = lam_free;
            }
        }
    });

    best.fhat.assign(n, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double* row = cls.values.row(erms[i]);
        for (std::size_t t = 0; t < n; ++t) best.fhat[t] += best.lambda[i] * row[t];
    }
    {
        const double* row = cls.values.row(best.class_row);
        for (std::size_t t = 0; t < n; ++t) best.fhat[t] += best.lambda[d] * row[t];
    }

    // Certified grid gap: moving each erm weight by < 1/g shifts the point by
    // at most (d/g) * D, so the risk by at most 2 R (d/g) D + ((d/g) D)^2,
    // where R bounds ||v - Y||_n over the star set and D the erm-to-member
    // distances.
    double R = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> diff(n);
        const double* row = cls.values.row(i);
        for (std::size_t t = 0; t < n; ++t) diff[t] = row[t] - cls.Y[t];
        R = std::max(R, norm_n(diff));
    }
    double D = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double* gi = cls.values.row(erms[i]);
        for (std::size_t f = 0; f < N; ++f) {
            const double* row = cls.values.row(f);
            std::vector<double> diff(n);
            for (std::size_t t = 0; t < n; ++t) diff[t] = gi[t] - row[t];
            D = std::max(D, norm_n(diff));
        }
    }
    const double step = static_cast<double>(d) / g * D;
    best.delta2 = 2.0 * R * step + step * step;
    return best;
}

double geometric_margin(const StarInstance& inst, double c, double additive) {
    const std::size_t n = inst.cls.points(), N = inst.cls.members();
    const double risk_fhat = empirical_risk(inst.fhat, inst.cls.Y);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < N; ++h) {
        const double* row = inst.cls.values.row(h);
        double risk_h = 0.0, dist = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double dy = row[t] - inst.cls.Y[t];
            risk_h += dy * dy;
            const double df = inst.fhat[t] - row[t];
            dist += df * df;
        }
        risk_h /= static_cast<double>(n);
        dist /= static_cast<double>(n);
        margin = std::min(margin, risk_h - risk_fhat - c * dist + additive);
    }
    return margin;
}

double additive_exact_form(const StarInstance& inst, double c) {
    const std::size_t n = inst.cls.points();
    double reach = 0.0;
    for (std::size_t h = 0; h < inst.cls.members(); ++h) {
        const double* row = inst.cls.values.row(h);
        double dist = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double d = inst.fhat[t] - row[t];
            dist += d * d;
        }
        reach = std::max(reach, std::sqrt(dist / static_cast<double>(n)));
    }
    const double slack = inst.delta1 + inst.delta2;
    const double root = std::sqrt(slack);
    return 2.0 * inst.delta1 + inst.delta2 + c * slack + 2.0 * c * root * (reach + root);
}

double offset_max_at_sigma(const FiniteClass& cls, const std::vector<double>& xi, double C,
                           const std::vector<int>& sigma) {
    const std::size_t n = cls.points(), N = cls.members();
    if (xi.size() != n || sigma.size() != n) throw ShapeError("offset: length mismatch");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < N; ++r) {
        const double* v = cls.values.row(r);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            acc += sigma[i] * xi[i] * v[i] - C * v[i] * v[i];
        best = std::max(best, acc / static_cast<double>(n));
    }
    return best;
}

OffsetResult offset_sup_exact(const FiniteClass& cls, const std::vector<double>& xi, double C) {
    const std::size_t n = cls.points(), N = cls.members();
    if (n > 20) throw ConfigError("offset_sup_exact: n > 20 is too large for enumeration");
    if (xi.size() != n) throw ShapeError("offset_sup_exact: xi length mismatch");

    // Per-row running dot products, updated by Gray-code bit flips.
    std::vector<double> dots(N, 0.0), quad(N, 0.0);
    std::vector<double> w(N * n);
    for (std::size_t r = 0; r < N; ++r) {
        const double* v = cls.values.row(r);
        double d = 0.0, q = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w[r * n + i] = xi[i] * v[i];
            d += w[r * n + i];  // all sigma start at +1
            q += C * v[i] * v[i];
        }
        dots[r] = d;
        quad[r] = q;
    }

    const std::uint64_t total = 1ULL << n;
    std::vector<int> sign(n, 1);
    double sum = 0.0;
    for (std::uint64_t step = 0;; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < N; ++r) best = std::max(best, dots[r] - quad[r]);
        sum += best / static_cast<double>(n);
        if (step + 1 == total) break;
        const unsigned bit = std::countr_zero(step + 1);
        sign[bit] = -sign[bit];
        for (std::size_t r = 0; r < N; ++r)
            dots[r] += 2.0 * sign[bit] * w[r * n + bit];
    }
    return OffsetResult{sum / static_cast<double>(total), 0.0};
}

OffsetResult offset_sup_mc(const FiniteClass& cls, const std::vector<double>& xi, double C,
                           std::size_t trials, Rng& rng) {
    if (trials < 2) throw ConfigError("offset_sup_mc: need at least 2 trials");
    const std::size_t n = cls.points();
    std::vector<int> sigma(n);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t i = 0; i < n; ++i) sigma[i] = rng.bernoulli(0.5) ? 1 : -1;
        const double v = offset_max_at_sigma(cls, xi, C, sigma);
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / static_cast<double>(trials);
    const double var = std::max(0.0, sumsq / static_cast<double>(trials) - mean * mean);
    return OffsetResult{mean, std::sqrt(var / static_cast<double>(trials))};
}

double lemma9_m_constant(const FiniteClass& cls, const std::vector<double>& xi, double C) {
    if (C <= 0.0) throw ConfigError("lemma9: C must be > 0");
    const std::size_t n = cls.points();
    if (xi.size() != n) throw ShapeError("lemma9: xi length mismatch");
    double M = 0.0;
    for (std::size_t r = 0; r < cls.members(); ++r) {
        const double* v = cls.values.row(r);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += v[i] * v[i] * xi[i] * xi[i];
            den += v[i] * v[i];
        }
        if (den == 0.0) continue;  // V \ {0}
        M = std::max(M, num / (2.0 * C * den));
    }
    return M;
}

double lemma9_bound(const FiniteClass& cls, const std::vector<double>& xi, double C,
                    std::optional<double> delta) {
    const double M = lemma9_m_constant(cls, xi, C);
    double logterm = std::log(static_cast<double>(cls.members()));
    if (delta) {
        if (*delta <= 0.0) throw ConfigError("lemma9_bound: delta must be > 0");
        logterm += std::log(1.0 / *delta);
    }
    return M * logterm / static_cast<double>(cls.points());
}

KmConstants km_constants(const FiniteClass& H, const std::vector<double>& xi, double C) {
    if (C <= 0.0) throw ConfigError("km_constants: C must be > 0");
    if (H.members() == 0) throw ShapeError("km_constants: empty class");
    const std::size_t n = H.points();
    if (xi.size() != n) throw ShapeError("km_constants: xi length mismatch");
    double xi_sq = 0.0;
    for (double x : xi) xi_sq += x * x;
    KmConstants out;
    out.K = 2.0 * (std::sqrt(xi_sq / static_cast<double>(n)) + C);
    for (std::size_t r = 0; r < H.members(); ++r) {
        const double* h = H.values.row(r);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += h[i] * h[i] * xi[i] * xi[i];
            den += h[i] * h[i];
        }
        if (den == 0.0) continue;  // H \ {0}
        out.M = std::max(out.M, 4.0 * num / (C * den));
    }
    return out;
}

double offset_coefficient(double c, double f_prime, double range_bound) {
    if (c <= 0.0 || f_prime <= 0.0 || range_bound <= 0.0)
        throw ConfigError("offset_coefficient: all arguments must be > 0");
    return std::min(c / (4.0 * f_prime), c / (4.0 * range_bound * (2.0 + c)));
}

TheoryConstants theory_constants(const MatD& H_ref, const std::vector<double>& xi_ref,
                                 const FiniteClass& H_train, const std::vector<double>& xi_train,
                                 double C) {
    TheoryConstants out;
    out.C = C;
    const std::size_t R = H_ref.cols;
    double A = 0.0;
    for (std::size_t r = 0; r < H_ref.rows; ++r) {
        const double* h = H_ref.row(r);
        double m2 = 0.0, m4 = 0.0;
        for (std::size_t i = 0; i < R; ++i) {
            const double s = h[i] * h[i];
            m2 += s;
            m4 += s * s;
        }
        m2 /= static_cast<double>(R);
        m4 /= static_cast<double>(R);
        if (m2 == 0.0) continue;
        A = std::max(A, m4 / (m2 * m2));
    }
    out.A = A;
    double b = 0.0;
    for (double x : xi_ref) b += x * x * x * x;
    out.B = xi_ref.empty() ? 0.0 : b / static_cast<double>(xi_ref.size());
    const KmConstants km = km_constants(H_train, xi_train, C);
    out.K = km.K;
    out.M = km.M;
    return out;
}

namespace {

double v_of(const CoverInputs& in) {
    NetworkSpec spec;
    spec.depth = in.L;
    spec.widths = in.widths;
    return v_constant(spec);
}

}  // namespace

double cover_bound_sparse(const CoverInputs& in) {
    if (in.epsilon <= 0.0) throw ConfigError("cover_bound_sparse: epsilon must be > 0");
    const double V = v_of(in);
    return (static_cast<double>(in.s) + 1.0) *
           std::log(2.0 / in.epsilon * (in.L + 1.0) * V * V);
}

double cover_bound_H(const CoverInputs& in) {
    if (in.epsilon <= 0.0) throw ConfigError("cover_bound_H: epsilon must be > 0");
    if (in.d < 1) throw ConfigError("cover_bound_H: d must be >= 1");
    const double V = v_of(in);
    CoverInputs shrunk = in;
    shrunk.epsilon = in.epsilon / (3.0 * (in.d + 1.0));
    const double inner = cover_bound_sparse(shrunk) +
                         std::log(6.0 * (in.d + 1.0) * V * (in.L + 1.0) / in.epsilon);
    return (in.d + 2.0) * inner;
}

double cover_bound_H_expanded(const CoverInputs& in) {
    if (in.n < 1) throw ConfigError("cover_bound_H_expanded: n must be >= 1");
    const double V = v_of(in);
    const double nd = static_cast<double>(in.n) * (in.d + 1.0);
    return (in.d + 2.0) *
           ((static_cast<double>(in.s) + 1.0) * std::log(2.0 * V * V * (in.L + 1.0) * 3.0 * nd) +
            std::log(6.0 * nd * V * (in.L + 1.0)));
}

double empirical_l2(const double* u, const double* v, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = u[i] - v[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

std::vector<std::size_t> greedy_cover(const MatD& points, double eps) {
    if (eps <= 0.0) throw ConfigError("greedy_cover: eps must be > 0");
    const std::size_t P = points.rows, n = points.cols;
    std::vector<std::size_t> net;
    if (P == 0) return net;

    std::vector<double> dist(P, std::numeric_limits<double>::infinity());
    std::size_t next = 0;
    while (true) {
        net.push_back(next);
        const double* c = points.row(next);
        double worst = 0.0;
        std::size_t worst_at = 0;
        for (std::size_t i = 0; i < P; ++i) {
            dist[i] = std::min(dist[i], empirical_l2(points.row(i), c, n));
            if (dist[i] > worst) {
                worst = dist[i];
                worst_at = i;
            }
        }
        if (worst <= eps) break;
        next = worst_at;
    }
    return net;
}

FiniteClass hull_H_sample(const FiniteClass& cls, std::size_t f_star_row, int d, Rng& rng,
                          std::size_t count) {
    if (f_star_row >= cls.members()) throw ShapeError("hull_H_sample: f_star_row out of range");
    if (d < 1) throw ConfigError("hull_H_sample: d must be >= 1");
    const std::size_t n = cls.points();
    FiniteClass out;
    out.values = MatD(count, n);
    out.Y = cls.Y;
    const double* fstar = cls.values.row(f_star_row);

    std::vector<double> lam(d);
    for (std::size_t s = 0; s < count; ++s) {
        // uniform over {lambda >= 0, sum <= 1} via a Dirichlet with slack coord
        double total = 0.0;
        std::vector<double> e(d + 1);
        for (int i = 0; i <= d; ++i) {
            double u;
            do { u = rng.uniform(); } while (u <= 0.0);
            e[i] = -std::log(u);
            total += e[i];
        }
        for (int i = 0; i < d; ++i) lam[i] = e[i] / total;

        const double* f = cls.values.row(rng.below(cls.members()));
        double* row = out.values.row(s);
        for (std::size_t t = 0; t < n; ++t) row[t] = f[t] - fstar[t];
        for (int i = 0; i < d; ++i) {
            const double* fi = cls.values.row(rng.below(cls.members()));
            for (std::size_t t = 0; t < n; ++t) row[t] += lam[i] * (fi[t] - f[t]);
        }
    }
    return out;
}

IsometryEstimate lower_isometry_estimate(const IsometryFamily& family, InputDist dist,
                                         std::size_t n, double eta, std::size_t trials,
                                         std::uint64_t seed, std::size_t reference_n) {
    if (eta <= 0.0 || eta >= 1.0) throw ConfigError("lower_isometry: eta must lie in (0,1)");
    if (trials < 1) throw ConfigError("lower_isometry: trials must be >= 1");
    Rng root(seed);

    auto draw_point = [&](Rng& r, std::vector<double>& x) {
        for (double& c : x)
            c = dist == InputDist::UniformCube ? r.uniform(-1.0, 1.0) : r.normal();
    };

    std::vector<double> ef2 = family.analytic_Ef2;
    if (ef2.empty()) {
        ef2.assign(family.members, 0.0);
        Rng ref_rng = root.child(999);
        std::vector<double> x(family.dim);
        for (std::size_t i = 0; i < reference_n; ++i) {
            draw_point(ref_rng, x);
            for (std::size_t m = 0; m < family.members; ++m) {
                const double f = family.eval(m, x.data());
                ef2[m] += f * f;
            }
        }
        for (double& v : ef2) v /= static_cast<double>(reference_n);
    }

    IsometryEstimate out;
    out.trials = trials;
    std::vector<std::size_t> keep;
    for (std::size_t m = 0; m < family.members; ++m) {
        if (ef2[m] > 0.0)
            keep.push_back(m);
        else
            ++out.excluded;
    }
    if (keep.empty()) throw ConfigError("lower_isometry: every member has E f^2 = 0");

    std::size_t successes = 0;
    std::vector<double> x(family.dim);
    for (std::size_t t = 0; t < trials; ++t) {
        Rng trial_rng = root.child(t);
        std::vector<double> sums(keep.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            draw_point(trial_rng, x);
            for (std::size_t k = 0; k < keep.size(); ++k) {
                const double f = family.eval(keep[k], x.data());
                sums[k] += f * f;
            }
        }
        double inf_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < keep.size(); ++k)
            inf_ratio = std::min(inf_ratio, sums[k] / static_cast<double>(n) / ef2[keep[k]]);
        if (inf_ratio >= 1.0 - eta) ++successes;
    }
    out.probability = static_cast<double>(successes) / static_cast<double>(trials);
    out.stderr = std::sqrt(std::max(0.0, out.probability * (1.0 - out.probability) /
                                             static_cast<double>(trials)));
    return out;
}

Corollary3Result corollary3_margin(const StarInstance& inst, const StarMin& fit,
                                   const FiniteClass& ref, double c) {
    if (ref.members() != inst.cls.members())
        throw ShapeError("corollary3: reference class must mirror the training class");
    const std::size_t n = inst.cls.points(), R = ref.points();
    const std::size_t d = inst.erms.size();

    Corollary3Result out;
    // population risk minimizer over the class
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < ref.members(); ++r) {
        const double risk = empirical_risk_row(ref, r);
        if (risk < best) {
            best = risk;
            out.f_star_row = r;
        }
    }

    // fhat on the reference sample: same convex combination of the class rows
    std::vector<double> fhat_ref(R, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double* row = ref.values.row(inst.erms[i]);
        for (std::size_t t = 0; t < R; ++t) fhat_ref[t] += fit.lambda[i] * row[t];
    }
    {
        const double* row = ref.values.row(fit.class_row);
        for (std::size_t t = 0; t < R; ++t) fhat_ref[t] += fit.lambda[d] * row[t];
    }

    const double* fstar_ref = ref.values.row(out.f_star_row);
    const double* fstar_train = inst.cls.values.row(out.f_star_row);

    double e_fhat = 0.0, e_fstar = 0.0, e_cross = 0.0, e_dist = 0.0;
    std::vector<double> z(R);
    for (std::size_t t = 0; t < R; ++t) {
        const double dy_hat = fhat_ref[t] - ref.Y[t];
        const double dy_star = fstar_ref[t] - ref.Y[t];
        const double diff = fstar_ref[t] - fhat_ref[t];
        e_fhat += dy_hat * dy_hat;
        e_fstar += dy_star * dy_star;
        e_cross += 2.0 * dy_star * diff;
        e_dist += diff * diff;
        z[t] = -dy_hat * dy_hat + dy_star * dy_star - 2.0 * dy_star * diff + diff * diff;
    }
    e_fhat /= R; e_fstar /= R; e_cross /= R; e_dist /= R;

    double emp_cross = 0.0, emp_dist = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double dy_star = fstar_train[t] - inst.cls.Y[t];
        const double diff = fstar_train[t] - inst.fhat[t];
        emp_cross += 2.0 * dy_star * diff;
        emp_dist += diff * diff;
    }
    emp_cross /= n; emp_dist /= n;

    const double lhs = e_fhat - e_fstar - 2.0 * (1.0 + c) * (inst.delta1 + inst.delta2);
    const double rhs = (emp_cross - e_cross) + e_dist - (1.0 + c) * emp_dist;
    out.margin = rhs - lhs;

    double zm = 0.0;
    for (double v : z) zm += v;
    zm /= R;
    double zvar = 0.0;
    for (double v : z) zvar += (v - zm) * (v - zm);
    out.stderr = std::sqrt(zvar / R / R);
    return out;
}

double excess_risk_synthetic(const std::function<std::vector<double>(const MatD&)>& predict_fn,
                             const SyntheticSpec& synth, std::size_t reference_n,
                             std::uint64_t seed) {
    if (reference_n < 1) throw ConfigError("excess_risk_synthetic: reference_n must be >= 1");
    Rng rng(seed);
    const std::size_t p = synth.teacher_spec.input_dim();
    MatD X(reference_n, p);
    for (double& v : X.data)
        v = synth.input == InputDist::UniformCube ? rng.uniform(-1.0, 1.0) : rng.normal();

    NetParamsD teacher = synth.teacher_params;
    MatD fstar = batch_forward(synth.teacher_spec, teacher, X, Mode::Eval);
    const std::vector<double> pred = predict_fn(X);
    if (pred.size() != reference_n) throw ShapeError("excess_risk_synthetic: prediction length");

    double acc = 0.0;
    for (std::size_t i = 0; i < reference_n; ++i) {
        const double d = pred[i] - fstar(i, 0);
        acc += d * d;
    }
    return acc / static_cast<double>(reference_n);
}

}  // namespace star::theory
