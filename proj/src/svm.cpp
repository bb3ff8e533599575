#include <algorithm>
#include <cmath>
#include <random>

#include "auscult/classify.hpp"
#include "auscult/error.hpp"
#include "classify_detail.hpp"

namespace auscult {

namespace {

constexpr double kEps = 1e-6;
constexpr std::size_t kMaxCachedKernel = 16'000'000;  // entries; 128 MB of doubles

// Platt's SMO. Decision function f(x) = sum_i a_i y_i K(x_i, x) + b; the error
// cache holds E_i = f(x_i) - y_i for every training point.
class Smo {
public:
    Smo(const Rows& x, const Labels& labels, const SvmParams& p, std::uint64_t seed)
        : x_(x), n_(x.size()), C_(p.C), gamma_(p.gamma), tol_(p.tolerance), rng_(seed) {
        y_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) y_[i] = labels[i] == Label::Crackle ? 1.0 : -1.0;
        alpha_.assign(n_, 0.0);
        err_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) err_[i] = -y_[i];
        if (n_ * n_ <= kMaxCachedKernel) {
            full_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i) {
                for (std::size_t j = i; j < n_; ++j) full_[i * n_ + j] = full_[j * n_ + i] = rbf(i, j);
            }
        }
    }

    /// Returns false when a pass cap stopped the outer loop early.
    bool run(int max_examine_all) {
        const std::size_t step_cap = std::max<std::size_t>(100'000, 1000 * n_);
        std::size_t changed = 0;
        bool examine_all = true;
        int sweeps = 0;
        while (changed > 0 || examine_all) {
            if (examine_all) {
                if (sweeps == max_examine_all) return false;
                ++sweeps;
            }
            if (steps_ >= step_cap) return false;
            changed = 0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (examine_all || non_bound(i)) changed += examine(i);
            }
            if (examine_all) {
                examine_all = false;
            } else if (changed == 0) {
                examine_all = true;
            }
        }
        return true;
    }

    const std::vector<double>& alphas() const { return alpha_; }
    const std::vector<double>& y() const { return y_; }
    double bias() const { return b_; }

private:
    double rbf(std::size_t i, std::size_t j) const { return std::exp(-gamma_ * detail::squared_distance(x_[i], x_[j])); }
    double k(std::size_t i, std::size_t j) const { return full_.empty() ? rbf(i, j) : full_[i * n_ + j]; }
    bool non_bound(std::size_t i) const { return alpha_[i] > 0.0 && alpha_[i] < C_; }

    int examine(std::size_t i2) {
        const double r2 = err_[i2] * y_[i2];
        if (!((r2 < -tol_ && alpha_[i2] < C_) || (r2 > tol_ && alpha_[i2] > 0.0))) return 0;

        // Second choice: the non-bound point maximising |E1 - E2|.
        std::size_t best = n_;
        double gap = -1.0;
        std::size_t nb = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            if (!non_bound(i)) continue;
            ++nb;
            const double g = std::abs(err_[i] - err_[i2]);
            if (g > gap) {
                gap = g;
                best = i;
            }
        }
        if (nb > 1 && best < n_ && take_step(best, i2)) return 1;

        std::uniform_int_distribution<std::size_t> start(0, n_ - 1);
        const std::size_t s1 = start(rng_);
        for (std::size_t o = 0; o < n_; ++o) {
            const std::size_t i1 = (s1 + o) % n_;
            if (non_bound(i1) && take_step(i1, i2)) return 1;
        }
        const std::size_t s2 = start(rng_);
        for (std::size_t o = 0; o < n_; ++o) {
            const std::size_t i1 = (s2 + o) % n_;
            if (take_step(i1, i2)) return 1;
        }
        return 0;
    }

    bool take_step(std::size_t i1, std::size_t i2) {
        if (i1 == i2) return false;
        ++steps_;
        const double a1 = alpha_[i1], a2 = alpha_[i2];
        const double y1 = y_[i1], y2 = y_[i2];
        const double e1 = err_[i1], e2 = err_[i2];
        const double s = y1 * y2;
        double lo, hi;
        if (y1 != y2) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(C_, C_ + a2 - a1);
        } else {
            lo = std::max(0.0, a1 + a2 - C_);
            hi = std::min(C_, a1 + a2);
        }
        if (lo == hi) return false;

        const double k11 = k(i1, i1), k12 = k(i1, i2), k22 = k(i2, i2);
        const double eta = k11 + k22 - 2.0 * k12;
        double a2n;
        if (eta > 0.0) {
            a2n = std::clamp(a2 + y2 * (e1 - e2) / eta, lo, hi);
        } else {
            // Objective at the segment ends.
            const double f1 = y1 * (e1 - b_) - a1 * k11 - s * a2 * k12;
            const double f2 = y2 * (e2 - b_) - s * a1 * k12 - a2 * k22;
            const double l1 = a1 + s * (a2 - lo), h1 = a1 + s * (a2 - hi);
            const double lobj = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
            const double hobj = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
            if (lobj < hobj - kEps) {
                a2n = lo;
            } else if (lobj > hobj + kEps) {
                a2n = hi;
            } else {
                a2n = a2;
            }
        }
        if (a2n < 1e-8) a2n = 0.0;
        if (a2n > C_ - 1e-8) a2n = C_;
        if (std::abs(a2n - a2) < kEps * (a2n + a2 + kEps)) return false;
        double a1n = a1 + s * (a2 - a2n);
        if (a1n < 1e-8) a1n = 0.0;
        if (a1n > C_ - 1e-8) a1n = C_;

        const double d1 = y1 * (a1n - a1), d2 = y2 * (a2n - a2);
        const double b1 = b_ - e1 - d1 * k11 - d2 * k12;
        const double b2 = b_ - e2 - d1 * k12 - d2 * k22;
        double bn;
        if (a1n > 0.0 && a1n < C_) {
            bn = b1;
        } else if (a2n > 0.0 && a2n < C_) {
            bn = b2;
        } else {
            bn = 0.5 * (b1 + b2);
        }
        const double db = bn - b_;
        for (std::size_t i = 0; i < n_; ++i) err_[i] += d1 * k(i1, i) + d2 * k(i2, i) + db;
        b_ = bn;
        alpha_[i1] = a1n;
        alpha_[i2] = a2n;
        return true;
    }

    const Rows& x_;
    std::size_t n_;
    double C_, gamma_, tol_;
    std::mt19937_64 rng_;
    std::vector<double> y_, alpha_, err_, full_;
    double b_ = 0.0;
    std::size_t steps_ = 0;
};

}  // namespace

SvmClassifier::SvmClassifier(ClassifierSpec spec, const Rows& rows, const Labels& labels)
    : Classifier(std::move(spec)) {
    if (rows.empty() || rows.size() != labels.size()) throw DataError("SVM needs matching, non-empty rows and labels");
    const auto pos = std::count(labels.begin(), labels.end(), Label::Crackle);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) throw DataError("SVM needs both classes present");

    Smo smo(rows, labels, spec_.svm, spec_.seed);
    converged_ = smo.run(spec_.svm.max_passes);
    if (!converged_) {
        warnings_.push_back("svm: SMO stopped at its pass cap (max_passes=" + std::to_string(spec_.svm.max_passes) +
                            ") before all KKT conditions held");
    }
    alphas_ = smo.alphas();
    bias_ = smo.bias();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (alphas_[i] > 0.0) {
            support_.push_back(rows[i]);
            coef_.push_back(alphas_[i] * smo.y()[i]);
        }
    }
}

SvmClassifier::SvmClassifier(ClassifierSpec spec, Rows support, std::vector<double> coef, double bias)
    : Classifier(std::move(spec)), support_(std::move(support)), coef_(std::move(coef)), bias_(bias) {
    if (support_.size() != coef_.size()) throw DataError("svm support/coef length mismatch");
}

double SvmClassifier::decision(std::span<const double> row) const {
    double f = bias_;
    for (std::size_t i = 0; i < support_.size(); ++i) {
        if (support_[i].size() != row.size()) {
            throw ConfigError("svm fitted on " + std::to_string(support_[i].size()) + " features, query has " +
                              std::to_string(row.size()));
        }
        f += coef_[i] * std::exp(-spec_.svm.gamma * detail::squared_distance(support_[i], row));
    }
    return f;
}

Label SvmClassifier::predict(std::span<const double> row) const {
    return decision(row) > 0.0 ? Label::Crackle : Label::NoCrackle;
}

nlohmann::json SvmClassifier::to_json() const {
    return detail::model_envelope(spec_, {{"support", support_}, {"coef", coef_}, {"bias", bias_}});
}

}  // namespace auscult
