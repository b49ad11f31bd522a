#include "cfair/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cfair/parallel.hpp"

namespace cfair {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kMaxExactComponents = 4096;
constexpr std::uint64_t kExactTag = 0x45584143ULL;
constexpr std::uint64_t kMcmcTag = 0x4d434d43ULL;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double normal_logpdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

bool is_zero(const Eigen::VectorXd& v) { return v.size() == 0 || v.cwiseAbs().maxCoeff() == 0.0; }

std::vector<std::size_t> resolve_evidence(const CompiledModel& cm, const std::vector<VariableId>& names) {
    std::vector<std::size_t> idx;
    for (const auto& name : names) {
        const std::size_t i = cm.index(name);
        if (cm.role(i) == Role::Background) {
            throw Error(ErrorCode::InvalidModel, "evidence may not include background variable '" + name + "'");
        }
        if (std::find(idx.begin(), idx.end(), i) != idx.end()) {
            throw Error(ErrorCode::InvalidModel, "evidence lists '" + name + "' twice");
        }
        idx.push_back(i);
    }
    return idx;
}

void check_evidence_values(const CompiledModel& cm, const std::vector<std::size_t>& idx,
                           std::span<const double> values) {
    if (values.size() != idx.size()) throw Error(ErrorCode::DimensionMismatch, "evidence arity mismatch");
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const Domain& d = cm.model().variables[idx[j]].domain;
        if (!std::isfinite(values[j]) || !d.contains(values[j])) {
            throw Error(ErrorCode::DomainViolation,
                        "evidence value for '" + cm.name(idx[j]) + "' is outside its domain");
        }
    }
}

double log_sum_exp(const std::vector<double>& v) {
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// Symmetric PSD square root via eigen-decomposition; tiny negative
/// eigenvalues from round-off are clipped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double draw_categorical(const CompiledNode& node, double u) { return node.value_from_noise({}, u); }

}  // namespace

void McmcConfig::validate() const {
    if (chains == 0) throw Error(ErrorCode::Config, "mcmc chains must be positive");
    if (kept == 0) throw Error(ErrorCode::Config, "mcmc kept must be positive");
    if (thin == 0) throw Error(ErrorCode::Config, "mcmc thin must be positive");
    if (!(proposal_std > 0.0) || !std::isfinite(proposal_std)) {
        throw Error(ErrorCode::Config, "mcmc proposal_std must be positive");
    }
}

Eigen::MatrixXd PosteriorDraws::backgrounds(std::size_t record, const CausalModel& model) const {
    std::vector<Eigen::Index> cols;
    for (std::size_t i = 0; i < model.variables.size(); ++i) {
        if (model.variables[i].role == Role::Background) cols.push_back(static_cast<Eigen::Index>(i));
    }
    const Eigen::MatrixXd& m = records.at(record).latent;
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
    return out;
}

KeyedNoise world_noise(const McmcConfig& config, std::uint64_t record_id, std::size_t draw) {
    return KeyedNoise{config.seed, record_id, draw};
}

namespace {

/// Fills the latent columns the evidence does not constrain: backgrounds come
/// from their prior (keyed like forward noise), other noise stays NaN.
template <class Row>
void fill_unconstrained(const CompiledModel& cm, const std::vector<char>& relevant, const KeyedNoise& noise, Row&& row) {
    for (std::size_t v = 0; v < cm.size(); ++v) {
        if (relevant[v]) continue;
        const CompiledNode& node = cm.node(v);
        if (cm.role(v) == Role::Background) {
            row(static_cast<Eigen::Index>(v)) = node.value_from_noise({}, noise(node));
        } else {
            row(static_cast<Eigen::Index>(v)) = kNaN;
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Exact path: joint Gaussian conditioning, one component per assignment of the
// categorical backgrounds the evidence depends on.

struct Abductor::ExactPlan {
    const CompiledModel* cm = nullptr;
    std::vector<std::size_t> evidence_idx;
    std::vector<int> evidence_slot;  // per variable, -1 if unobserved
    std::vector<char> relevant;
    std::vector<std::size_t> cat_vars;
    std::vector<std::size_t> latent_var;  // variable each continuous latent belongs to
    std::vector<VariableId> latent_names;
    Eigen::VectorXd prior_mean;
    Eigen::VectorXd prior_var;
    std::vector<std::size_t> gauss_vars;   // observed LG rows entering the joint system
    std::vector<std::size_t> scalar_vars;  // observed nodes scored with constant parents
    Eigen::MatrixXd H;
    // cached conditioning quantities
    Eigen::MatrixXd S_pinv;
    Eigen::MatrixXd null_dirs;
    double log_pdet = 0.0;
    Eigen::Index rank = 0;
    Eigen::MatrixXd gain;
    Eigen::MatrixXd post_cov;
    Eigen::MatrixXd post_sqrt;
    std::size_t components = 1;

    ExactPlan(const CompiledModel& model, std::vector<std::size_t> evidence) : cm(&model), evidence_idx(std::move(evidence)) {
        const std::size_t n = cm->size();
        evidence_slot.assign(n, -1);
        for (std::size_t j = 0; j < evidence_idx.size(); ++j) evidence_slot[evidence_idx[j]] = static_cast<int>(j);
        relevant = cm->ancestor_mask(evidence_idx);

        // Continuous latents, in topological order.
        std::vector<int> latent_of(n, -1);
        std::vector<double> mu, var;
        for (std::size_t v : cm->order()) {
            if (!relevant[v]) continue;
            const CompiledNode& node = cm->node(v);
            if (node.kind == NodeKind::CategoricalBackground) {
                cat_vars.push_back(v);
                components *= node.cat_values.size();
                if (components > kMaxExactComponents) {
                    throw Error(ErrorCode::NotLinearGaussian, "too many categorical configurations for exact abduction");
                }
            } else if (node.kind == NodeKind::NormalBackground) {
                latent_of[v] = static_cast<int>(latent_var.size());
                latent_var.push_back(v);
                latent_names.push_back(cm->name(v));
                mu.push_back(node.prior_mean);
                var.push_back(node.prior_std * node.prior_std);
            } else if (evidence_slot[v] < 0 && node.kind == NodeKind::LinearGaussian && node.sigma > 0.0) {
                latent_of[v] = static_cast<int>(latent_var.size());
                latent_var.push_back(v);
                latent_names.push_back("noise:" + cm->name(v));
                mu.push_back(0.0);
                var.push_back(1.0);
            }
        }
        const Eigen::Index K = static_cast<Eigen::Index>(latent_var.size());
        prior_mean = Eigen::Map<Eigen::VectorXd>(mu.data(), K);
        prior_var = Eigen::Map<Eigen::VectorXd>(var.data(), K);

        // Symbolic pass: coefficient of each variable on the latents.
        std::vector<Eigen::VectorXd> h(n, Eigen::VectorXd::Zero(K));
        std::vector<Eigen::VectorXd> rows;
        for (std::size_t v : cm->order()) {
            if (!relevant[v]) continue;
            const CompiledNode& node = cm->node(v);
            if (node.kind == NodeKind::NormalBackground) {
                h[v](latent_of[v]) = 1.0;
                continue;
            }
            if (node.kind == NodeKind::CategoricalBackground) continue;
            bool parents_constant = true;
            for (auto p : node.parents) parents_constant = parents_constant && is_zero(h[p]);
            if (evidence_slot[v] >= 0) {
                if (node.kind == NodeKind::LinearGaussian && !parents_constant) {
                    Eigen::VectorXd row = Eigen::VectorXd::Zero(K);
                    for (std::size_t j = 0; j < node.parents.size(); ++j) row += node.weights[j] * h[node.parents[j]];
                    rows.push_back(row);
                    gauss_vars.push_back(v);
                } else if (parents_constant) {
                    scalar_vars.push_back(v);
                } else {
                    throw Error(ErrorCode::NotLinearGaussian,
                                "'" + cm->name(v) + "' is observed with a non-Gaussian equation of latent parents");
                }
                continue;  // observed values act as constants downstream
            }
            switch (node.kind) {
                case NodeKind::LinearGaussian:
                    for (std::size_t j = 0; j < node.parents.size(); ++j) h[v] += node.weights[j] * h[node.parents[j]];
                    if (latent_of[v] >= 0) h[v](latent_of[v]) += node.sigma;
                    break;
                case NodeKind::Table:
                    if (!parents_constant) {
                        throw Error(ErrorCode::NotLinearGaussian, "table '" + cm->name(v) + "' has latent parents");
                    }
                    break;
                default:
                    throw Error(ErrorCode::NotLinearGaussian,
                                "unobserved '" + cm->name(v) + "' has a non-Gaussian equation on the evidence path");
            }
        }

        const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
        H.resize(m, K);
        Eigen::VectorXd noise_var(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            H.row(i) = rows[static_cast<std::size_t>(i)].transpose();
            const double s = cm->node(gauss_vars[static_cast<std::size_t>(i)]).sigma;
            noise_var(i) = s * s;
        }
        const Eigen::MatrixXd D = prior_var.asDiagonal();
        Eigen::MatrixXd S = H * D * H.transpose();
        S.diagonal() += noise_var;
        S_pinv = Eigen::MatrixXd::Zero(m, m);
        null_dirs.resize(m, 0);
        if (m > 0) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
            const Eigen::VectorXd& ev = es.eigenvalues();
            const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
            std::vector<Eigen::Index> nulls;
            for (Eigen::Index i = 0; i < m; ++i) {
                const Eigen::VectorXd q = es.eigenvectors().col(i);
                if (ev(i) > tol) {
                    S_pinv += q * q.transpose() / ev(i);
                    log_pdet += std::log(ev(i));
                    ++rank;
                } else {
                    nulls.push_back(i);
                }
            }
            null_dirs.resize(m, static_cast<Eigen::Index>(nulls.size()));
            for (std::size_t j = 0; j < nulls.size(); ++j) {
                null_dirs.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(nulls[j]);
            }
        }
        gain = D * H.transpose() * S_pinv;
        post_cov = D - gain * H * D;
        post_cov = 0.5 * (post_cov + post_cov.transpose());
        post_sqrt = psd_sqrt(post_cov);
    }

    GaussianPosterior posterior(std::span<const double> ev) const {
        const std::size_t n = cm->size();
        std::vector<double> values(n, 0.0);
        std::vector<std::size_t> choice(cat_vars.size(), 0);
        std::vector<double> logw;
        std::vector<GaussianComponent> comps;
        const Eigen::Index m = H.rows();
        Eigen::VectorXd r(m);
        for (std::size_t c = 0; c < components; ++c) {
            // decode mixed-radix assignment
            std::size_t rem = c;
            double lw = 0.0;
            GaussianComponent comp;
            for (std::size_t j = 0; j < cat_vars.size(); ++j) {
                const CompiledNode& node = cm->node(cat_vars[j]);
                const std::size_t k = node.cat_values.size();
                choice[j] = rem % k;
                rem /= k;
                values[cat_vars[j]] = node.cat_values[choice[j]];
                lw += std::log(node.cat_probs[choice[j]]);
                comp.categorical[cm->name(cat_vars[j])] = values[cat_vars[j]];
            }
            if (lw == kNegInf) continue;
            // forward at the prior mean of the continuous latents
            for (std::size_t i = 0; i < latent_var.size(); ++i) {
                const std::size_t v = latent_var[i];
                if (cm->role(v) == Role::Background) values[v] = prior_mean(static_cast<Eigen::Index>(i));
            }
            Eigen::Index row = 0;
            for (std::size_t v : cm->order()) {
                if (!relevant[v] || cm->role(v) == Role::Background) continue;
                const CompiledNode& node = cm->node(v);
                if (evidence_slot[v] >= 0) {
                    const double obs = ev[static_cast<std::size_t>(evidence_slot[v])];
                    if (row < m && gauss_vars[static_cast<std::size_t>(row)] == v) {
                        r(row++) = obs - node.linear_predictor(values);
                    } else {
                        lw += node.log_likelihood(values, obs);
                    }
                    values[v] = obs;
                } else {
                    values[v] = node.value_from_noise(values, 0.0);
                }
            }
            if (lw == kNegInf || std::isnan(lw)) continue;
            if (m > 0) {
                const double scale = 1.0 + r.cwiseAbs().maxCoeff();
                if (null_dirs.cols() > 0 && (null_dirs.transpose() * r).cwiseAbs().maxCoeff() > 1e-7 * scale) continue;
                lw += -0.5 * r.dot(S_pinv * r) - 0.5 * log_pdet - 0.5 * static_cast<double>(rank) * kLog2Pi;
            }
            comp.mean = prior_mean + gain * r;
            comp.cov = post_cov;
            logw.push_back(lw);
            comps.push_back(std::move(comp));
        }
        const double total = log_sum_exp(logw);
        if (comps.empty() || total == kNegInf) {
            throw Error(ErrorCode::SingularConditioning, "evidence is jointly impossible under the model");
        }
        GaussianPosterior out;
        out.latent_names = latent_names;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            comps[i].weight = std::exp(logw[i] - total);
            if (comps[i].weight > 0.0) out.components.push_back(std::move(comps[i]));
        }
        return out;
    }

    RecordDraws sample(std::span<const double> ev, const McmcConfig& config, std::uint64_t record_id,
                       std::size_t n_draws) const {
        const GaussianPosterior post = posterior(ev);
        std::vector<double> cdf;
        double acc = 0.0;
        for (const auto& c : post.components) cdf.push_back(acc += c.weight);
        cdf.back() = 1.0;
        const Eigen::Index K = prior_mean.size();
        RecordDraws out;
        out.exact = true;
        out.latent.resize(static_cast<Eigen::Index>(n_draws), static_cast<Eigen::Index>(cm->size()));
        Eigen::VectorXd xi(K);
        for (std::size_t d = 0; d < n_draws; ++d) {
            KeyedRng rng(combine_keys(config.seed, record_id), d, kExactTag);
            const double u = rng.uniform();
            std::size_t k = 0;
            while (k + 1 < cdf.size() && u > cdf[k]) ++k;
            const GaussianComponent& comp = post.components[k];
            for (Eigen::Index i = 0; i < K; ++i) xi(i) = rng.normal();
            const Eigen::VectorXd z = comp.mean + post_sqrt * xi;
            auto row = out.latent.row(static_cast<Eigen::Index>(d));
            fill_unconstrained(*cm, relevant, world_noise(config, record_id, d), row);
            for (std::size_t v = 0; v < cm->size(); ++v) {
                if (relevant[v]) row(static_cast<Eigen::Index>(v)) = kNaN;
            }
            for (std::size_t j = 0; j < cat_vars.size(); ++j) {
                row(static_cast<Eigen::Index>(cat_vars[j])) = comp.categorical.at(cm->name(cat_vars[j]));
            }
            for (Eigen::Index i = 0; i < K; ++i) row(static_cast<Eigen::Index>(latent_var[static_cast<std::size_t>(i)])) = z(i);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// MCMC path: random-walk Metropolis over the continuous latents left free by
// zero-noise linear constraints, plus independent prior resampling for each
// discrete latent.

struct Abductor::McmcPlan {
    enum class SlotKind { Categorical, Uniform };
    struct DiscreteSlot {
        std::size_t var;
        SlotKind kind;
    };

    const CompiledModel* cm = nullptr;
    std::vector<std::size_t> evidence_idx;
    std::vector<int> evidence_slot;
    std::vector<char> relevant;
    std::vector<std::size_t> relevant_order;
    std::vector<DiscreteSlot> discrete;
    std::vector<int> discrete_of;  // per variable
    std::vector<std::size_t> latent_var;
    std::vector<int> latent_of;
    Eigen::VectorXd prior_mean;
    Eigen::VectorXd prior_std;
    std::vector<std::size_t> constraint_vars;
    std::vector<char> eliminated;
    Eigen::MatrixXd C_pinv;      // K x c
    Eigen::MatrixXd range_null;  // c x (c - rank); y must be orthogonal to these
    Eigen::MatrixXd N;           // K x T basis of the free directions

    McmcPlan(const CompiledModel& model, std::vector<std::size_t> evidence) : cm(&model), evidence_idx(std::move(evidence)) {
        const std::size_t n = cm->size();
        evidence_slot.assign(n, -1);
        for (std::size_t j = 0; j < evidence_idx.size(); ++j) evidence_slot[evidence_idx[j]] = static_cast<int>(j);
        relevant = cm->ancestor_mask(evidence_idx);
        discrete_of.assign(n, -1);
        latent_of.assign(n, -1);
        eliminated.assign(n, 0);
        std::vector<double> mu, sd;
        for (std::size_t v : cm->order()) {
            if (!relevant[v]) continue;
            relevant_order.push_back(v);
            const CompiledNode& node = cm->node(v);
            const bool observed = evidence_slot[v] >= 0;
            if (node.kind == NodeKind::CategoricalBackground) {
                discrete_of[v] = static_cast<int>(discrete.size());
                discrete.push_back({v, SlotKind::Categorical});
            } else if (node.kind == NodeKind::NormalBackground) {
                latent_of[v] = static_cast<int>(latent_var.size());
                latent_var.push_back(v);
                mu.push_back(node.prior_mean);
                sd.push_back(node.prior_std);
            } else if (!observed && node.noise_kind() == NoiseKind::Normal) {
                latent_of[v] = static_cast<int>(latent_var.size());
                latent_var.push_back(v);
                mu.push_back(0.0);
                sd.push_back(1.0);
            } else if (!observed && node.noise_kind() == NoiseKind::Uniform) {
                discrete_of[v] = static_cast<int>(discrete.size());
                discrete.push_back({v, SlotKind::Uniform});
            }
        }
        const Eigen::Index K = static_cast<Eigen::Index>(latent_var.size());
        prior_mean = Eigen::Map<Eigen::VectorXd>(mu.data(), K);
        prior_std = Eigen::Map<Eigen::VectorXd>(sd.data(), K);

        // Affine structure of each variable in the continuous latents.
        std::vector<Eigen::VectorXd> h(n, Eigen::VectorXd::Zero(K));
        std::vector<char> nonaffine(n, 0);
        std::vector<Eigen::VectorXd> rows;
        for (std::size_t v : relevant_order) {
            const CompiledNode& node = cm->node(v);
            if (node.kind == NodeKind::NormalBackground) {
                h[v](latent_of[v]) = 1.0;
                continue;
            }
            if (node.kind == NodeKind::CategoricalBackground) continue;
            bool any_nonaffine = false;
            bool all_constant = true;
            for (auto p : node.parents) {
                any_nonaffine = any_nonaffine || nonaffine[p];
                all_constant = all_constant && is_zero(h[p]) && !nonaffine[p];
            }
            if (evidence_slot[v] >= 0) {
                if (node.kind == NodeKind::LinearGaussian && node.sigma == 0.0 && !all_constant) {
                    if (any_nonaffine) {
                        throw Error(ErrorCode::UnsupportedConstraint,
                                    "zero-noise evidence on '" + cm->name(v) +
                                        "' depends non-linearly on continuous latents");
                    }
                    Eigen::VectorXd row = Eigen::VectorXd::Zero(K);
                    for (std::size_t j = 0; j < node.parents.size(); ++j) row += node.weights[j] * h[node.parents[j]];
                    rows.push_back(row);
                    constraint_vars.push_back(v);
                    eliminated[v] = 1;
                }
                continue;
            }
            if (node.kind == NodeKind::LinearGaussian) {
                nonaffine[v] = any_nonaffine;
                for (std::size_t j = 0; j < node.parents.size(); ++j) h[v] += node.weights[j] * h[node.parents[j]];
                if (latent_of[v] >= 0) h[v](latent_of[v]) += node.sigma;
            } else {
                nonaffine[v] = !all_constant;
            }
        }

        const Eigen::Index c = static_cast<Eigen::Index>(rows.size());
        if (c == 0) {
            N = Eigen::MatrixXd::Identity(K, K);
            C_pinv.resize(K, 0);
            range_null.resize(0, 0);
            return;
        }
        Eigen::MatrixXd C(c, K);
        for (Eigen::Index i = 0; i < c; ++i) C.row(i) = rows[static_cast<std::size_t>(i)].transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Eigen::VectorXd& s = svd.singularValues();
        const double tol = 1e-10 * std::max(1.0, s.size() ? s(0) : 0.0);
        Eigen::Index r = 0;
        while (r < s.size() && s(r) > tol) ++r;
        C_pinv = svd.matrixV().leftCols(r) * s.head(r).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(r).transpose();
        range_null = svd.matrixU().rightCols(c - r);
        N = svd.matrixV().rightCols(K - r);
    }

    struct State {
        std::vector<double> disc;  // category value or uniform draw per discrete slot
        Eigen::VectorXd t;
        Eigen::VectorXd z;
        double logp = kNegInf;
    };

    double disc_log_prior(std::size_t slot, double value) const {
        if (discrete[slot].kind == SlotKind::Uniform) return 0.0;
        const CompiledNode& node = cm->node(discrete[slot].var);
        for (std::size_t i = 0; i < node.cat_values.size(); ++i) {
            if (node.cat_values[i] == value) return std::log(node.cat_probs[i]);
        }
        return kNegInf;
    }

    double disc_prior_draw(std::size_t slot, KeyedRng& rng) const {
        const double u = rng.uniform();
        if (discrete[slot].kind == SlotKind::Uniform) return u;
        return draw_categorical(cm->node(discrete[slot].var), u);
    }

    /// Values of every relevant variable for latent state (disc, z).
    void forward(const std::vector<double>& disc, const Eigen::VectorXd& z, std::span<const double> ev,
                 std::vector<double>& values) const {
        for (std::size_t v : relevant_order) {
            const CompiledNode& node = cm->node(v);
            if (evidence_slot[v] >= 0) {
                values[v] = ev[static_cast<std::size_t>(evidence_slot[v])];
            } else if (latent_of[v] >= 0) {
                const double zi = z(latent_of[v]);
                values[v] = node.kind == NodeKind::NormalBackground ? zi : node.linear_predictor(values) + node.sigma * zi;
            } else if (discrete_of[v] >= 0) {
                values[v] = node.value_from_noise(values, disc[static_cast<std::size_t>(discrete_of[v])]);
            } else {
                values[v] = node.value_from_noise(values, 0.0);
            }
        }
    }

    /// Solves the zero-noise constraints for the discrete state; returns false
    /// when they are inconsistent.
    bool particular_solution(const std::vector<double>& disc, std::span<const double> ev, std::vector<double>& values,
                             Eigen::VectorXd& z0) const {
        const Eigen::Index K = prior_mean.size();
        z0 = Eigen::VectorXd::Zero(K);
        if (constraint_vars.empty()) return true;
        forward(disc, z0, ev, values);
        Eigen::VectorXd y(static_cast<Eigen::Index>(constraint_vars.size()));
        for (std::size_t i = 0; i < constraint_vars.size(); ++i) {
            const std::size_t v = constraint_vars[i];
            y(static_cast<Eigen::Index>(i)) = ev[static_cast<std::size_t>(evidence_slot[v])] - cm->node(v).linear_predictor(values);
        }
        if (range_null.cols() > 0) {
            const double scale = 1.0 + y.cwiseAbs().maxCoeff();
            if ((range_null.transpose() * y).cwiseAbs().maxCoeff() > 1e-7 * scale) return false;
        }
        z0 = C_pinv * y;
        return true;
    }

    double log_density(State& st, std::span<const double> ev, std::vector<double>& values) const {
        double lp = 0.0;
        for (std::size_t j = 0; j < discrete.size(); ++j) lp += disc_log_prior(j, st.disc[j]);
        if (lp == kNegInf) return st.logp = kNegInf;
        Eigen::VectorXd z0;
        if (!particular_solution(st.disc, ev, values, z0)) return st.logp = kNegInf;
        st.z = z0 + N * st.t;
        for (Eigen::Index i = 0; i < st.z.size(); ++i) lp += normal_logpdf(st.z(i), prior_mean(i), prior_std(i));
        forward(st.disc, st.z, ev, values);
        for (std::size_t v : evidence_idx) {
            if (eliminated[v]) continue;
            lp += cm->node(v).log_likelihood(values, ev[static_cast<std::size_t>(evidence_slot[v])]);
        }
        if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity()) {
            throw Error(ErrorCode::NonFiniteDensity, "posterior log-density is not finite");
        }
        return st.logp = lp;
    }

    State initial_state(std::span<const double> ev, KeyedRng& rng, std::vector<double>& values) const {
        State st;
        st.disc.resize(discrete.size());
        const Eigen::Index K = prior_mean.size();
        const Eigen::Index T = N.cols();
        auto project = [&](const Eigen::VectorXd& z) {
            Eigen::VectorXd z0;
            if (!particular_solution(st.disc, ev, values, z0)) z0 = Eigen::VectorXd::Zero(K);
            return Eigen::VectorXd(N.transpose() * (z - z0));
        };
        for (int attempt = 0; attempt < 1000; ++attempt) {
            for (std::size_t j = 0; j < discrete.size(); ++j) st.disc[j] = disc_prior_draw(j, rng);
            Eigen::VectorXd z(K);
            for (Eigen::Index i = 0; i < K; ++i) z(i) = prior_mean(i) + prior_std(i) * rng.normal();
            st.t = T > 0 ? project(z) : Eigen::VectorXd();
            if (log_density(st, ev, values) > kNegInf) return st;
        }
        // Exhaustive search over categorical slots (uniform slots stay random).
        std::size_t total = 1;
        for (const auto& slot : discrete) {
            if (slot.kind == SlotKind::Categorical) total *= cm->node(slot.var).cat_values.size();
            if (total > 1000000) break;
        }
        if (total <= 1000000) {
            for (std::size_t c = 0; c < total; ++c) {
                std::size_t rem = c;
                for (std::size_t j = 0; j < discrete.size(); ++j) {
                    if (discrete[j].kind == SlotKind::Uniform) {
                        st.disc[j] = rng.uniform();
                        continue;
                    }
                    const auto& vals = cm->node(discrete[j].var).cat_values;
                    st.disc[j] = vals[rem % vals.size()];
                    rem /= vals.size();
                }
                st.t = T > 0 ? project(prior_mean) : Eigen::VectorXd();
                if (log_density(st, ev, values) > kNegInf) return st;
            }
        }
        throw Error(ErrorCode::ZeroPosteriorMass, "no latent configuration is consistent with the evidence");
    }

    RecordDraws sample(std::span<const double> ev, const McmcConfig& config, std::uint64_t record_id,
                       std::size_t n_draws) const {
        config.validate();
        const std::size_t kept = std::max(config.kept, (n_draws + config.chains - 1) / config.chains);
        const Eigen::Index T = N.cols();
        RecordDraws out;
        out.latent.resize(static_cast<Eigen::Index>(n_draws), static_cast<Eigen::Index>(cm->size()));
        std::vector<double> values(cm->size(), 0.0);
        std::size_t cont_moves = 0, cont_accepts = 0, disc_moves = 0, disc_accepts = 0;
        std::size_t row = 0;
        for (std::size_t chain = 0; chain < config.chains && row < n_draws; ++chain) {
            KeyedRng rng(combine_keys(config.seed, record_id), chain, kMcmcTag);
            State st = initial_state(ev, rng, values);
            const std::size_t iterations = config.burn_in + kept * config.thin;
            for (std::size_t it = 1; it <= iterations && row < n_draws; ++it) {
                if (T > 0) {
                    State prop = st;
                    for (Eigen::Index i = 0; i < T; ++i) prop.t(i) += config.proposal_std * rng.normal();
                    const double lp = log_density(prop, ev, values);
                    ++cont_moves;
                    if (std::log(rng.uniform()) < lp - st.logp) {
                        st = std::move(prop);
                        ++cont_accepts;
                    }
                }
                for (std::size_t j = 0; j < discrete.size(); ++j) {
                    State prop = st;
                    prop.disc[j] = disc_prior_draw(j, rng);
                    const double lp = log_density(prop, ev, values);
                    ++disc_moves;
                    const double log_ratio =
                        lp - st.logp - disc_log_prior(j, prop.disc[j]) + disc_log_prior(j, st.disc[j]);
                    if (std::log(rng.uniform()) < log_ratio) {
                        st = std::move(prop);
                        ++disc_accepts;
                    }
                }
                if (it > config.burn_in && (it - config.burn_in) % config.thin == 0) {
                    auto r = out.latent.row(static_cast<Eigen::Index>(row));
                    fill_unconstrained(*cm, relevant, world_noise(config, record_id, row), r);
                    for (std::size_t v = 0; v < cm->size(); ++v) {
                        if (relevant[v]) r(static_cast<Eigen::Index>(v)) = kNaN;
                    }
                    for (std::size_t j = 0; j < discrete.size(); ++j) r(static_cast<Eigen::Index>(discrete[j].var)) = st.disc[j];
                    for (std::size_t i = 0; i < latent_var.size(); ++i) {
                        r(static_cast<Eigen::Index>(latent_var[i])) = st.z(static_cast<Eigen::Index>(i));
                    }
                    ++row;
                }
            }
        }
        if (cont_moves > 0) {
            out.acceptance = static_cast<double>(cont_accepts) / static_cast<double>(cont_moves);
        } else if (disc_moves > 0) {
            out.acceptance = static_cast<double>(disc_accepts) / static_cast<double>(disc_moves);
        } else {
            out.acceptance = 1.0;
        }
        return out;
    }
};

// ---------------------------------------------------------------------------

Abductor::Abductor(std::shared_ptr<const CompiledModel> model, std::vector<VariableId> evidence_vars,
                   AbductionMethod method)
    : model_(std::move(model)), evidence_idx_(resolve_evidence(*model_, evidence_vars)) {
    if (method != AbductionMethod::Mcmc) {
        try {
            exact_ = std::make_unique<ExactPlan>(*model_, evidence_idx_);
        } catch (const Error& e) {
            if (method == AbductionMethod::Exact || e.code() != ErrorCode::NotLinearGaussian) throw;
        }
    }
    if (!exact_) mcmc_ = std::make_unique<McmcPlan>(*model_, evidence_idx_);
}

Abductor::~Abductor() = default;
Abductor::Abductor(Abductor&&) noexcept = default;
Abductor& Abductor::operator=(Abductor&&) noexcept = default;

bool Abductor::exact() const { return exact_ != nullptr; }

RecordDraws Abductor::sample(std::span<const double> values, const McmcConfig& config, std::uint64_t record_id,
                             std::size_t n_draws) const {
    config.validate();
    check_evidence_values(*model_, evidence_idx_, values);
    if (n_draws == 0) n_draws = config.draws();
    return exact_ ? exact_->sample(values, config, record_id, n_draws)
                  : mcmc_->sample(values, config, record_id, n_draws);
}

GaussianPosterior Abductor::posterior(std::span<const double> values) const {
    if (!exact_) throw Error(ErrorCode::NotLinearGaussian, "exact posterior unavailable for this evidence");
    check_evidence_values(*model_, evidence_idx_, values);
    return exact_->posterior(values);
}

namespace {

std::pair<std::vector<VariableId>, std::vector<double>> split_evidence(const Evidence& evidence) {
    std::vector<VariableId> names;
    std::vector<double> values;
    for (const auto& [name, value] : evidence) {
        names.push_back(name);
        values.push_back(value);
    }
    return {names, values};
}

}  // namespace

GaussianPosterior abduct_exact(const CausalModel& model, const Evidence& evidence) {
    auto cm = std::make_shared<const CompiledModel>(model);
    auto [names, values] = split_evidence(evidence);
    Abductor ab(cm, names, AbductionMethod::Exact);
    return ab.posterior(values);
}

RecordDraws abduct_mcmc(const CausalModel& model, const Evidence& evidence, const McmcConfig& config,
                        std::uint64_t record_id) {
    auto cm = std::make_shared<const CompiledModel>(model);
    auto [names, values] = split_evidence(evidence);
    Abductor ab(cm, names, AbductionMethod::Mcmc);
    return ab.sample(values, config, record_id);
}

PosteriorDraws abduct_records(const CausalModel& model, const Dataset& data,
                              const std::vector<VariableId>& evidence_vars, const McmcConfig& config,
                              const std::vector<std::size_t>& rows, AbductionMethod method) {
    config.validate();
    auto cm = std::make_shared<const CompiledModel>(model);
    Abductor ab(cm, evidence_vars, method);
    std::vector<const std::vector<double>*> cols;
    for (const auto& name : evidence_vars) cols.push_back(&data.column(name));
    std::vector<std::size_t> selected = rows;
    if (selected.empty()) {
        selected.resize(data.rows());
        for (std::size_t i = 0; i < selected.size(); ++i) selected[i] = i;
    }
    PosteriorDraws out;
    for (const auto& v : model.variables) out.variables.push_back(v.name);
    out.record_ids.assign(selected.begin(), selected.end());
    out.records.resize(selected.size());
    parallel_for(selected.size(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> ev(cols.size());
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < cols.size(); ++j) ev[j] = (*cols[j])[selected[i]];
            out.records[i] = ab.sample(ev, config, selected[i]);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------

WorldPlan::WorldPlan(const CompiledModel& model, const std::vector<std::size_t>& evidence_idx,
                     const Assignment& intervention)
    : model_(&model), evidence_idx_(evidence_idx) {
    const std::size_t n = model.size();
    intervened_mask_.assign(n, 0);
    intervened_value_.assign(n, 0.0);
    evidence_slot_.assign(n, -1);
    factual_mask_.assign(n, 0);
    std::vector<std::size_t> sources;
    for (const auto& [name, value] : intervention) {
        const std::size_t v = model.index(name);
        if (model.role(v) == Role::Background) {
            throw Error(ErrorCode::InterveneOnBackground, "cannot intervene on background '" + name + "'");
        }
        if (!model.model().variables[v].domain.contains(value)) {
            throw Error(ErrorCode::DomainViolation, "value outside domain of '" + name + "'");
        }
        intervened_mask_[v] = 1;
        intervened_value_[v] = value;
        sources.push_back(v);
    }
    const auto desc = model.descendant_mask(sources);
    for (std::size_t j = 0; j < evidence_idx.size(); ++j) {
        if (!desc[evidence_idx[j]]) evidence_slot_[evidence_idx[j]] = static_cast<int>(j);
    }
}

void WorldPlan::hold_factual(const std::vector<std::size_t>& vars) {
    for (auto v : vars) {
        if (!intervened_mask_[v]) factual_mask_[v] = 1;
    }
}

void WorldPlan::evaluate(std::span<const double> latent, std::span<const double> evidence, const KeyedNoise& noise,
                         std::span<double> out, std::span<const double> factual) const {
    const CompiledModel& cm = *model_;
    for (std::size_t v : cm.order()) {
        if (intervened_mask_[v]) {
            out[v] = intervened_value_[v];
        } else if (evidence_slot_[v] >= 0) {
            out[v] = evidence[static_cast<std::size_t>(evidence_slot_[v])];
        } else if (factual_mask_[v]) {
            out[v] = factual[v];
        } else if (cm.role(v) == Role::Background) {
            out[v] = latent[v];
        } else {
            const CompiledNode& node = cm.node(v);
            const NoiseKind kind = node.noise_kind();
            double draw = 0.0;
            if (kind != NoiseKind::None) draw = std::isnan(latent[v]) ? noise(node) : latent[v];
            out[v] = node.value_from_noise(out, draw);
        }
    }
}

Dataset counterfactual_sample(const CausalModel& model, const Evidence& evidence, const Assignment& intervention,
                              std::size_t n_draws, const McmcConfig& config) {
    if (n_draws == 0) throw Error(ErrorCode::Config, "n_draws must be positive");
    auto cm = std::make_shared<const CompiledModel>(model);
    auto [names, values] = split_evidence(evidence);
    Abductor ab(cm, names);
    const WorldPlan plan(*cm, ab.evidence_index(), intervention);
    const RecordDraws draws = ab.sample(values, config, 0, n_draws);
    const std::size_t width = cm->size();
    std::vector<double> world(width);
    std::vector<double> latent(width);
    Dataset out;
    for (auto v : cm->order()) {
        out.columns.push_back(cm->name(v));
        out.data.emplace_back(n_draws);
    }
    for (std::size_t d = 0; d < n_draws; ++d) {
        for (std::size_t v = 0; v < width; ++v) latent[v] = draws.latent(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(v));
        plan.evaluate(latent, values, world_noise(config, 0, d), world);
        for (std::size_t c = 0; c < width; ++c) out.data[c][d] = world[cm->order()[c]];
    }
    return out;
}

double batch_means_se(std::span<const double> samples, std::size_t batches) {
    const std::size_t n = samples.size();
    if (n < 2) return std::numeric_limits<double>::infinity();
    batches = std::clamp<std::size_t>(batches, 2, n);
    const std::size_t size = n / batches;
    std::vector<double> means;
    for (std::size_t b = 0; b < batches; ++b) {
        double s = 0.0;
        for (std::size_t i = b * size; i < (b + 1) * size; ++i) s += samples[i];
        means.push_back(s / static_cast<double>(size));
    }
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(batches);
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(batches - 1);
    return std::sqrt(var / static_cast<double>(batches));
}

}  // namespace cfair
