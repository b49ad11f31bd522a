#include "cfair/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "cfair/error.hpp"
#include "cfair/parallel.hpp"
#include "cfair/rng.hpp"

namespace cfair {

using nlohmann::json;

std::size_t Encoding::width() const {
    std::size_t w = intercept ? 1 : 0;
    for (const auto& c : columns) w += c.width();
    return w;
}

std::vector<std::string> Encoding::labels() const {
    std::vector<std::string> out;
    if (intercept) out.push_back("(intercept)");
    for (const auto& c : columns) {
        if (c.levels.empty()) {
            out.push_back(c.name);
            continue;
        }
        for (std::size_t l = 1; l < c.levels.size(); ++l) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", c.levels[l]);
            out.push_back(c.name + "=" + buf);
        }
    }
    return out;
}

void Encoding::encode(std::span<const double> values, std::span<double> out) const {
    std::size_t k = 0;
    if (intercept) out[k++] = 1.0;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const auto& c = columns[j];
        if (c.levels.empty()) {
            out[k++] = values[j];
            continue;
        }
        bool found = values[j] == c.levels.front();
        for (std::size_t l = 1; l < c.levels.size(); ++l) {
            const bool hit = values[j] == c.levels[l];
            found = found || hit;
            out[k++] = hit ? 1.0 : 0.0;
        }
        if (!found) throw Error(ErrorCode::DomainViolation, "value of '" + c.name + "' is not a declared level");
    }
}

json Encoding::to_json() const {
    json cols = json::array();
    for (const auto& c : columns) {
        json entry{{"name", c.name}};
        if (!c.levels.empty()) entry["levels"] = c.levels;
        cols.push_back(entry);
    }
    return json{{"intercept", intercept}, {"columns", cols}};
}

Encoding Encoding::from_json(const json& doc) {
    Encoding e;
    e.intercept = doc.value("intercept", true);
    for (const auto& c : doc.at("columns")) {
        e.columns.push_back({c.at("name").get<std::string>(), c.value("levels", std::vector<double>{})});
    }
    return e;
}

Encoding make_encoding(const std::vector<VariableId>& columns, const CausalModel* model, bool intercept) {
    Encoding e;
    e.intercept = intercept;
    for (const auto& name : columns) {
        ColumnCoding c{name, {}};
        if (model && model->has(name)) {
            const Domain& d = model->variable(name).domain;
            if (d.finite()) {
                c.levels = d.values;
                std::sort(c.levels.begin(), c.levels.end());
            }
        }
        e.columns.push_back(std::move(c));
    }
    return e;
}

DesignMatrix design_matrix(const Dataset& data, const Encoding& encoding) {
    const std::size_t n = data.rows();
    std::vector<const std::vector<double>*> cols;
    for (const auto& c : encoding.columns) cols.push_back(&data.column(c.name));
    DesignMatrix dm;
    dm.labels = encoding.labels();
    dm.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(encoding.width()));
    std::vector<double> row(cols.size()), out(encoding.width());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) row[j] = (*cols[j])[i];
        encoding.encode(row, out);
        for (std::size_t k = 0; k < out.size(); ++k) dm.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = out[k];
    }
    return dm;
}

LinearFit ols_fit(const DesignMatrix& X, const Eigen::VectorXd& y) {
    if (X.X.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "design rows and outcome length differ");
    if (X.X.rows() == 0) throw Error(ErrorCode::DegenerateInput, "no rows to fit");
    Eigen::MatrixXd A = X.X.transpose() * X.X;
    A.diagonal().array() += kRidge;
    LinearFit fit;
    fit.labels = X.labels;
    fit.weights = A.ldlt().solve(X.X.transpose() * y);
    if (!fit.weights.allFinite()) throw Error(ErrorCode::DegenerateInput, "least squares produced non-finite weights");
    const Eigen::VectorXd r = y - X.X * fit.weights;
    fit.residual_std = std::sqrt(r.squaredNorm() / static_cast<double>(y.size()));
    fit.iterations = 1;
    fit.loss_trace = {r.squaredNorm() / static_cast<double>(y.size())};
    return fit;
}

LinearFit logistic_fit(const DesignMatrix& X, const Eigen::VectorXd& y) {
    if (X.X.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "design rows and outcome length differ");
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) == 0.0) has0 = true;
        else if (y(i) == 1.0) has1 = true;
        else throw Error(ErrorCode::DegenerateInput, "logistic outcome must be 0 or 1");
    }
    if (!has0 || !has1) throw Error(ErrorCode::DegenerateInput, "logistic outcome has a single class");
    const Eigen::Index n = X.X.rows(), p = X.X.cols();
    LinearFit fit;
    fit.labels = X.labels;
    fit.weights = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd prob(n), w(n);
    for (std::size_t it = 0; it < 100; ++it) {
        const Eigen::VectorXd eta = X.X * fit.weights;
        double nll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            prob(i) = 1.0 / (1.0 + std::exp(-eta(i)));
            w(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-12);
            // -log p(y | eta), computed stably
            nll += std::max(eta(i), 0.0) - y(i) * eta(i) + std::log1p(std::exp(-std::abs(eta(i))));
        }
        fit.loss_trace.push_back(nll / static_cast<double>(n));
        Eigen::MatrixXd H = X.X.transpose() * w.asDiagonal() * X.X;
        H.diagonal().array() += kRidge;
        const Eigen::VectorXd step = H.ldlt().solve(X.X.transpose() * (y - prob));
        fit.weights += step;
        fit.iterations = it + 1;
        if (!fit.weights.allFinite()) throw Error(ErrorCode::DegenerateInput, "logistic regression diverged");
        if (step.cwiseAbs().maxCoeff() <= 1e-8) break;
    }
    fit.separation_warning = fit.weights.cwiseAbs().maxCoeff() > 30.0;
    return fit;
}

Level3Fit level3_fit(const Dataset& data, const std::vector<VariableId>& targets,
                     const std::vector<VariableId>& regressors, const CausalModel* model) {
    Level3Fit out;
    out.encoding = make_encoding(regressors, model);
    const DesignMatrix dm = design_matrix(data, out.encoding);
    for (const auto& t : targets) {
        if (model && model->has(t) && model->variable(t).domain.finite() && model->variable(t).domain.values.size() <= 2) {
            throw Error(ErrorCode::DegenerateInput, "level 3 target '" + t + "' must be continuous");
        }
        const auto& col = data.column(t);
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
        LinearFit fit = ols_fit(dm, y);
        const Eigen::VectorXd r = y - dm.X * fit.weights;
        out.residuals.add_column("eps_" + t, std::vector<double>(r.data(), r.data() + r.size()));
        out.fits.emplace(t, std::move(fit));
    }
    return out;
}

Dataset level3_residuals(const Dataset& data, const std::vector<VariableId>& targets,
                         const std::vector<VariableId>& regressors, const CausalModel* model) {
    return level3_fit(data, targets, regressors, model).residuals;
}

// ---------------------------------------------------------------------------
// Single-latent template (K -> observed children).

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class FactorKind { Gaussian, Poisson, Bernoulli };

struct Factor {
    VariableId child;
    FactorKind kind;
    std::size_t k_pos = 0;  // position of K among the equation's parents
    double wk = 0.0;
    double sigma = 1.0;
    std::vector<double> offset;  // per record: intercept + other parents
    std::vector<double> y;
};

struct LatentTarget {
    VariableId latent;
    double prior_mean = 0.0;
    double prior_std = 1.0;
    std::vector<Factor> factors;
    std::size_t n = 0;

    double log_post(std::size_t i, double k) const {
        const double z = (k - prior_mean) / prior_std;
        double lp = -0.5 * z * z;
        for (const auto& f : factors) {
            const double eta = f.offset[i] + f.wk * k;
            switch (f.kind) {
                case FactorKind::Gaussian: {
                    const double r = (f.y[i] - eta) / f.sigma;
                    lp -= 0.5 * r * r;
                    break;
                }
                case FactorKind::Poisson: lp += f.y[i] * eta - std::exp(eta); break;
                case FactorKind::Bernoulli: lp += f.y[i] * eta - (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta))); break;
            }
        }
        return lp;
    }

    /// Normalized log-likelihood of record i's factors given k.
    double log_lik(std::size_t i, double k) const {
        double ll = 0.0;
        for (const auto& f : factors) {
            const double eta = f.offset[i] + f.wk * k;
            switch (f.kind) {
                case FactorKind::Gaussian: {
                    const double r = (f.y[i] - eta) / f.sigma;
                    ll += -0.5 * r * r - std::log(f.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
                    break;
                }
                case FactorKind::Poisson: ll += f.y[i] * eta - std::exp(eta) - std::lgamma(f.y[i] + 1.0); break;
                case FactorKind::Bernoulli: ll += f.y[i] * eta - (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta))); break;
            }
        }
        return ll;
    }
};

std::size_t find_latent(const CausalModel& model) {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < model.variables.size(); ++i) {
        const auto& v = model.variables[i];
        if (v.role != Role::Background) continue;
        // categorical backgrounds only feed observed protected variables
        const auto prior = model.priors.find(v.name);
        if (prior != model.priors.end() && !std::holds_alternative<NormalPrior>(prior->second)) continue;
        bool has_child = false;
        for (const auto& eq : model.equations) {
            if (std::find(eq.parents.begin(), eq.parents.end(), v.name) != eq.parents.end()) has_child = true;
        }
        if (!has_child) continue;
        if (found) throw Error(ErrorCode::InvalidModel, "latent template allows a single normal background variable");
        found = i;
    }
    if (!found) throw Error(ErrorCode::InvalidModel, "model has no latent background variable");
    return *found;
}

LatentTarget build_target(const CausalModel& model, const Dataset& data, const std::vector<VariableId>& evidence) {
    require_valid(model);
    const std::size_t li = find_latent(model);
    LatentTarget t;
    t.latent = model.variables[li].name;
    const auto it = model.priors.find(t.latent);
    const NormalPrior prior = it == model.priors.end() ? NormalPrior{} : std::get<NormalPrior>(it->second);
    t.prior_mean = prior.mean;
    t.prior_std = prior.std;
    t.n = data.rows();
    for (const auto& name : evidence) {
        const StructuralEquation* eq = model.equation_for(name);
        if (!eq) throw Error(ErrorCode::InvalidModel, "evidence '" + name + "' has no equation");
        auto pos = std::find(eq->parents.begin(), eq->parents.end(), t.latent);
        if (pos == eq->parents.end()) continue;
        Factor f;
        f.child = name;
        f.k_pos = static_cast<std::size_t>(pos - eq->parents.begin());
        const std::vector<double>* weights = nullptr;
        double intercept = 0.0;
        if (auto* lg = std::get_if<LinearGaussian>(&eq->family)) {
            f.kind = FactorKind::Gaussian;
            f.sigma = lg->noise_std;
            if (!(f.sigma > 0.0)) throw Error(ErrorCode::DegenerateScale, "'" + name + "' has zero noise");
            weights = &lg->weights;
            intercept = lg->intercept;
        } else if (auto* p = std::get_if<PoissonLogLink>(&eq->family)) {
            f.kind = FactorKind::Poisson;
            weights = &p->weights;
            intercept = p->intercept;
        } else if (auto* b = std::get_if<BernoulliLogit>(&eq->family)) {
            f.kind = FactorKind::Bernoulli;
            weights = &b->weights;
            intercept = b->intercept;
        } else {
            throw Error(ErrorCode::InvalidModel, "'" + name + "' must be linear-Gaussian, Poisson or Bernoulli");
        }
        f.wk = (*weights)[f.k_pos];
        f.offset.assign(t.n, intercept);
        for (std::size_t j = 0; j < eq->parents.size(); ++j) {
            if (j == f.k_pos) continue;
            const auto& col = data.column(eq->parents[j]);
            for (std::size_t i = 0; i < t.n; ++i) f.offset[i] += (*weights)[j] * col[i];
        }
        f.y = data.column(name);
        t.factors.push_back(std::move(f));
    }
    if (t.factors.empty()) throw Error(ErrorCode::InvalidModel, "no evidence variable depends on the latent");
    return t;
}

/// Random-walk Metropolis on one record's latent. Returns accepted moves.
std::size_t run_chain(const LatentTarget& t, std::size_t i, double& k, double& lp, std::size_t steps, double step,
                      KeyedRng& rng, double* keep, std::size_t burn, std::size_t thin) {
    std::size_t accepted = 0, kept = 0;
    for (std::size_t s = 1; s <= steps; ++s) {
        const double prop = k + step * rng.normal();
        const double lpp = t.log_post(i, prop);
        if (std::isnan(lpp)) throw Error(ErrorCode::NonFiniteDensity, "latent log-density is not finite");
        if (std::log(rng.uniform()) < lpp - lp) {
            k = prop;
            lp = lpp;
            ++accepted;
        }
        if (keep && s > burn && (s - burn) % thin == 0) keep[kept++] = k;
    }
    return accepted;
}

constexpr std::uint64_t kEmTag = 0x454d4b31ULL;
constexpr std::uint64_t kFinalTag = 0x464b4452ULL;

Eigen::MatrixXd final_draws(const LatentTarget& t, const McmcConfig& config, double* mean_acceptance) {
    config.validate();
    const std::size_t m = config.draws();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(t.n), static_cast<Eigen::Index>(m));
    std::vector<double> acc(t.n, 0.0);
    parallel_for(t.n, [&](std::size_t begin, std::size_t end) {
        std::vector<double> buf(config.kept);
        for (std::size_t i = begin; i < end; ++i) {
            std::size_t accepted = 0;
            for (std::size_t c = 0; c < config.chains; ++c) {
                KeyedRng rng(combine_keys(config.seed, i), c, kFinalTag);
                double k = t.prior_mean;
                double lp = t.log_post(i, k);
                const std::size_t steps = config.burn_in + config.kept * config.thin;
                accepted += run_chain(t, i, k, lp, steps, config.proposal_std, rng, buf.data(), config.burn_in, config.thin);
                for (std::size_t d = 0; d < config.kept; ++d) {
                    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c * config.kept + d)) = buf[d];
                }
            }
            acc[i] = static_cast<double>(accepted) /
                     static_cast<double>(config.chains * (config.burn_in + config.kept * config.thin));
        }
    });
    if (mean_acceptance) {
        double s = 0.0;
        for (double a : acc) s += a;
        *mean_acceptance = t.n ? s / static_cast<double>(t.n) : 0.0;
    }
    return out;
}

/// Poisson regression by Newton's method, warm-started at `w`.
Eigen::VectorXd poisson_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::VectorXd w) {
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd mu = (X * w).array().exp().matrix();
        Eigen::MatrixXd H = X.transpose() * mu.asDiagonal() * X;
        H.diagonal().array() += kRidge;
        const Eigen::VectorXd step = H.ldlt().solve(X.transpose() * (y - mu));
        w += step;
        if (!w.allFinite()) throw Error(ErrorCode::NonFiniteDensity, "Poisson regression diverged");
        if (step.cwiseAbs().maxCoeff() <= 1e-10) break;
    }
    return w;
}

}  // namespace

Eigen::MatrixXd sample_single_latent(const CausalModel& model, const Dataset& data,
                                     const std::vector<VariableId>& evidence, const McmcConfig& config,
                                     double* mean_acceptance) {
    const LatentTarget t = build_target(model, data, evidence);
    return final_draws(t, config, mean_acceptance);
}

double single_latent_loglik(const CausalModel& model, const Dataset& data, const std::vector<VariableId>& evidence) {
    const LatentTarget t = build_target(model, data, evidence);
    constexpr int kGrid = 1601;
    const double lo = t.prior_mean - 8.0 * t.prior_std;
    const double h = 16.0 * t.prior_std / (kGrid - 1);
    double total = 0.0;
    std::vector<double> terms(kGrid);
    for (std::size_t i = 0; i < t.n; ++i) {
        double m = kNegInf;
        for (int g = 0; g < kGrid; ++g) {
            const double k = lo + g * h;
            const double z = (k - t.prior_mean) / t.prior_std;
            terms[g] = -0.5 * z * z - std::log(t.prior_std) - 0.5 * std::log(2.0 * std::numbers::pi) + t.log_lik(i, k);
            m = std::max(m, terms[g]);
        }
        double s = 0.0;
        for (double x : terms) s += std::exp(x - m);
        total += m + std::log(s * h);
    }
    return total / static_cast<double>(t.n);
}

json LatentModelFit::meta() const {
    return json{{"latent", latent},
                {"evidence", evidence},
                {"mean_acceptance", mean_acceptance},
                {"loglik_trace", loglik_trace},
                {"draws_per_record", draws.cols()}};
}

LatentModelFit fit_level2_latent(const Dataset& data, const CausalModel& spec, const McmcConfig& config,
                                 const LatentFitOptions& options) {
    config.validate();
    require_valid(spec);
    const std::size_t n = data.rows();
    if (n == 0) throw Error(ErrorCode::DegenerateInput, "no records to fit");
    const VariableId latent = spec.variables[find_latent(spec)].name;

    // Evidence: every modelled child of K present in the data.
    std::vector<VariableId> evidence;
    for (const auto& eq : spec.equations) {
        const bool child = std::find(eq.parents.begin(), eq.parents.end(), latent) != eq.parents.end();
        if (child && data.column_index(eq.child)) evidence.push_back(eq.child);
    }
    if (evidence.empty()) throw Error(ErrorCode::InvalidModel, "data contains no child of the latent");

    LatentModelFit out;
    out.model = spec;
    out.latent = latent;
    out.evidence = evidence;

    // Initial K: average of the children's standardized residuals given their
    // other parents, sign-aligned with the first Gaussian child.
    Eigen::MatrixXd draws(static_cast<Eigen::Index>(n), 1);
    {
        std::vector<Eigen::VectorXd> resid;
        std::size_t anchor = 0;
        for (std::size_t c = 0; c < evidence.size(); ++c) {
            const StructuralEquation* eq = spec.equation_for(evidence[c]);
            if (resid.empty() || !std::holds_alternative<LinearGaussian>(spec.equation_for(evidence[anchor])->family)) {
                if (std::holds_alternative<LinearGaussian>(eq->family)) anchor = c;
            }
            std::vector<VariableId> others;
            for (const auto& p : eq->parents) {
                if (p != latent) others.push_back(p);
            }
            const DesignMatrix dm = design_matrix(data, make_encoding(others, &spec));
            Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.column(evidence[c]).data(), static_cast<Eigen::Index>(n));
            if (std::holds_alternative<PoissonLogLink>(eq->family)) y = (y.array() + 0.5).log().matrix();
            Eigen::VectorXd r = y - dm.X * ols_fit(dm, y).weights;
            const double sd = std::sqrt(r.squaredNorm() / static_cast<double>(n));
            resid.push_back(sd > 0.0 ? Eigen::VectorXd(r / sd) : Eigen::VectorXd(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))));
        }
        Eigen::VectorXd k = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (const auto& r : resid) k += r.dot(resid[anchor]) >= 0.0 ? r : Eigen::VectorXd(-r);
        if (resid.size() == 1) {
            // a single child would be fit exactly; blend in keyed noise
            for (std::size_t i = 0; i < n; ++i) {
                KeyedRng rng(combine_keys(config.seed, i), kEmTag);
                k(static_cast<Eigen::Index>(i)) = 0.8 * k(static_cast<Eigen::Index>(i)) + 0.6 * rng.normal();
            }
        }
        const double mean = k.mean();
        const double sd = std::sqrt((k.array() - mean).square().mean());
        if (!(sd > 0.0)) throw Error(ErrorCode::DegenerateScale, "children of the latent show no residual variation");
        draws.col(0) = (k.array() - mean) / sd;
    }

    std::vector<double> k_state(n);
    for (std::size_t i = 0; i < n; ++i) k_state[i] = draws(static_cast<Eigen::Index>(i), 0);

    auto m_step = [&](const Eigen::MatrixXd& kd) {
        const Eigen::Index m = kd.cols();
        const Eigen::Index rows = static_cast<Eigen::Index>(n) * m;
        double complete_ll = 0.0;
        for (const auto& name : evidence) {
            StructuralEquation& eq = *out.model.equation_for(name);
            const Eigen::Index p = static_cast<Eigen::Index>(eq.parents.size()) + 1;
            Eigen::MatrixXd X(rows, p);
            Eigen::VectorXd y(rows);
            const auto& ycol = data.column(name);
            std::vector<const std::vector<double>*> pcols;
            for (const auto& par : eq.parents) pcols.push_back(par == latent ? nullptr : &data.column(par));
            for (std::size_t i = 0; i < n; ++i) {
                for (Eigen::Index d = 0; d < m; ++d) {
                    const Eigen::Index r = static_cast<Eigen::Index>(i) * m + d;
                    X(r, 0) = 1.0;
                    for (std::size_t j = 0; j < pcols.size(); ++j) {
                        X(r, static_cast<Eigen::Index>(j) + 1) =
                            pcols[j] ? (*pcols[j])[i] : kd(static_cast<Eigen::Index>(i), d);
                    }
                    y(r) = ycol[i];
                }
            }
            DesignMatrix dm{std::move(X), {}};
            std::visit(
                [&](auto& fam) {
                    using T = std::decay_t<decltype(fam)>;
                    Eigen::VectorXd w;
                    if constexpr (std::is_same_v<T, LinearGaussian>) {
                        const LinearFit fit = ols_fit(dm, y);
                        w = fit.weights;
                        if (fit.residual_std < 1e-6) {
                            throw Error(ErrorCode::DegenerateScale, "estimated noise of '" + name + "' collapsed");
                        }
                        fam.noise_std = fit.residual_std;
                        complete_ll += -static_cast<double>(rows) * (std::log(fit.residual_std) + 0.5);
                    } else if constexpr (std::is_same_v<T, PoissonLogLink>) {
                        Eigen::VectorXd w0(p);
                        w0(0) = fam.intercept;
                        for (Eigen::Index j = 1; j < p; ++j) w0(j) = fam.weights[static_cast<std::size_t>(j - 1)];
                        if (!w0.allFinite()) w0.setZero();
                        w = poisson_fit(dm.X, y, w0);
                        const Eigen::VectorXd eta = dm.X * w;
                        complete_ll += (y.array() * eta.array() - eta.array().exp()).sum();
                    } else if constexpr (std::is_same_v<T, BernoulliLogit>) {
                        w = logistic_fit(dm, y).weights;
                    } else {
                        throw Error(ErrorCode::InvalidModel, "unsupported family for '" + name + "'");
                    }
                    if constexpr (!std::is_same_v<T, DeterministicTable>) {
                        fam.intercept = w(0);
                        for (Eigen::Index j = 1; j < p; ++j) fam.weights[static_cast<std::size_t>(j - 1)] = w(j);
                    }
                },
                eq.family);
        }
        return complete_ll / static_cast<double>(rows);
    };

    // Sign convention: the first Gaussian child's weight on K is positive.
    auto fix_sign = [&](Eigen::MatrixXd& kd) {
        for (const auto& name : evidence) {
            StructuralEquation& eq = *out.model.equation_for(name);
            auto* lg = std::get_if<LinearGaussian>(&eq.family);
            if (!lg) continue;
            const std::size_t pos = static_cast<std::size_t>(
                std::find(eq.parents.begin(), eq.parents.end(), latent) - eq.parents.begin());
            if (lg->weights[pos] >= 0.0) return;
            break;
        }
        bool any_gaussian = false;
        for (const auto& name : evidence) {
            any_gaussian = any_gaussian || std::holds_alternative<LinearGaussian>(out.model.equation_for(name)->family);
        }
        if (!any_gaussian) return;
        for (auto& eq : out.model.equations) {
            auto pos = std::find(eq.parents.begin(), eq.parents.end(), latent);
            if (pos == eq.parents.end()) continue;
            const std::size_t j = static_cast<std::size_t>(pos - eq.parents.begin());
            std::visit(
                [&](auto& fam) {
                    if constexpr (!std::is_same_v<std::decay_t<decltype(fam)>, DeterministicTable>) fam.weights[j] = -fam.weights[j];
                },
                eq.family);
        }
        kd = -kd;
        for (auto& k : k_state) k = -k;
    };

    out.loglik_trace.push_back(m_step(draws));
    fix_sign(draws);
    const std::size_t kept = std::max<std::size_t>(1, options.inner_kept);
    for (std::size_t it = 1; it <= options.iterations; ++it) {
        const LatentTarget t = build_target(out.model, data, evidence);
        draws.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept));
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            std::vector<double> buf(kept);
            for (std::size_t i = begin; i < end; ++i) {
                KeyedRng rng(combine_keys(config.seed, i), it, kEmTag);
                double k = k_state[i];
                double lp = t.log_post(i, k);
                run_chain(t, i, k, lp, options.inner_steps + kept, config.proposal_std, rng, buf.data(),
                          options.inner_steps, 1);
                k_state[i] = k;
                for (std::size_t d = 0; d < kept; ++d) draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = buf[d];
            }
        });
        out.loglik_trace.push_back(m_step(draws));
        fix_sign(draws);
    }
    // Root protected/observed variables without parents: maximum likelihood intercepts.
    for (auto& eq : out.model.equations) {
        if (!eq.parents.empty() || !data.column_index(eq.child)) continue;
        const auto& col = data.column(eq.child);
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= static_cast<double>(n);
        if (auto* b = std::get_if<BernoulliLogit>(&eq.family)) {
            if (mean > 0.0 && mean < 1.0) b->intercept = std::log(mean / (1.0 - mean));
        }
    }
    require_valid(out.model);
    const LatentTarget t = build_target(out.model, data, evidence);
    out.draws = final_draws(t, config, &out.mean_acceptance);
    return out;
}

}  // namespace cfair
