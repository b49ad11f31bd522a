#include "cfair/fairlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cfair/error.hpp"
#include "cfair/parallel.hpp"
#include "cfair/scm.hpp"

namespace cfair {

using nlohmann::json;

json InputManifest::to_json() const {
    return json{{"background_inputs", background_inputs},
                {"observable_inputs", observable_inputs},
                {"include_protected", include_protected},
                {"whitelist", whitelist}};
}

InputManifest InputManifest::from_json(const json& doc) {
    InputManifest m;
    m.background_inputs = doc.value("background_inputs", std::vector<VariableId>{});
    m.observable_inputs = doc.value("observable_inputs", std::vector<VariableId>{});
    m.include_protected = doc.value("include_protected", false);
    m.whitelist = doc.value("whitelist", std::vector<VariableId>{});
    return m;
}

void validate_manifest(const InputManifest& manifest, const CausalModel& model) {
    for (const auto& name : manifest.background_inputs) {
        if (!model.has(name)) throw Error(ErrorCode::UnknownVariable, "unknown input '" + name + "'");
        if (model.variable(name).role != Role::Background) {
            throw Error(ErrorCode::InvalidModel, "'" + name + "' is not a background variable");
        }
    }
    const auto protected_vars = model.names_with_role(Role::Protected);
    const std::set<VariableId> protected_set(protected_vars.begin(), protected_vars.end());
    const std::set<VariableId> allowed = non_descendants(model, protected_set);
    const std::set<VariableId> whitelist(manifest.whitelist.begin(), manifest.whitelist.end());
    for (const auto& name : manifest.observable_inputs) {
        if (!model.has(name)) throw Error(ErrorCode::UnknownVariable, "unknown input '" + name + "'");
        const Role role = model.variable(name).role;
        if (role == Role::Background || role == Role::Outcome) {
            throw Error(ErrorCode::InvalidModel, "'" + name + "' cannot be an observable input");
        }
        if (role == Role::Protected) {
            if (!manifest.include_protected) {
                throw Error(ErrorCode::InvalidModel, "protected '" + name + "' used without include_protected");
            }
            continue;
        }
        if (!allowed.contains(name) && !whitelist.contains(name)) {
            throw Error(ErrorCode::InvalidModel, "'" + name + "' descends from a protected attribute");
        }
    }
}

std::string_view to_string(Head head) { return head == Head::Linear ? "linear" : "logistic"; }

Head head_from_string(std::string_view text) {
    if (text == "linear") return Head::Linear;
    if (text == "logistic") return Head::Logistic;
    throw Error(ErrorCode::Config, "unknown head '" + std::string(text) + "'");
}

std::vector<VariableId> FairPredictor::inputs() const {
    std::vector<VariableId> out = manifest.background_inputs;
    std::vector<VariableId> obs = manifest.observable_inputs;
    std::sort(obs.begin(), obs.end());
    out.insert(out.end(), obs.begin(), obs.end());
    return out;
}

double FairPredictor::predict(std::span<const double> values) const {
    std::vector<double> x(encoding.width());
    encoding.encode(values, x);
    double eta = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) eta += weights[static_cast<Eigen::Index>(k)] * x[k];
    return head == Head::Logistic ? 1.0 / (1.0 + std::exp(-eta)) : eta;
}

std::vector<double> FairPredictor::predict(const Dataset& data) const {
    const auto names = inputs();
    std::vector<const std::vector<double>*> cols;
    for (const auto& name : names) cols.push_back(&data.column(name));
    std::vector<double> out(data.rows());
    std::vector<double> row(names.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) row[j] = (*cols[j])[i];
        out[i] = predict(row);
    }
    return out;
}

json FairPredictor::to_json() const {
    json training{{"recipe", recipe},
                  {"loss_trace", loss_trace},
                  {"m", m},
                  {"evidence", evidence},
                  {"separation_warning", separation_warning},
                  {"mcmc",
                   {{"chains", config.chains},
                    {"burn_in", config.burn_in},
                    {"kept", config.kept},
                    {"thin", config.thin},
                    {"proposal_std", config.proposal_std},
                    {"seed", config.seed}}}};
    return json{{"manifest", manifest.to_json()},
                {"head", std::string(to_string(head))},
                {"encoding", encoding.to_json()},
                {"labels", labels},
                {"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
                {"training", training}};
}

FairPredictor FairPredictor::from_json(const json& doc) {
    try {
        FairPredictor p;
        p.manifest = InputManifest::from_json(doc.at("manifest"));
        p.head = head_from_string(doc.at("head").get<std::string>());
        p.encoding = Encoding::from_json(doc.at("encoding"));
        p.labels = doc.value("labels", std::vector<std::string>{});
        const auto w = doc.at("weights").get<std::vector<double>>();
        if (w.size() != p.encoding.width()) throw Error(ErrorCode::Parse, "predictor weights do not match encoding");
        p.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        if (doc.contains("training")) {
            const auto& t = doc.at("training");
            p.recipe = t.value("recipe", "");
            p.loss_trace = t.value("loss_trace", std::vector<double>{});
            p.m = t.value("m", std::size_t{0});
            p.evidence = t.value("evidence", std::vector<VariableId>{});
            p.separation_warning = t.value("separation_warning", false);
            if (t.contains("mcmc")) {
                const auto& c = t.at("mcmc");
                p.config.chains = c.value("chains", p.config.chains);
                p.config.burn_in = c.value("burn_in", p.config.burn_in);
                p.config.kept = c.value("kept", p.config.kept);
                p.config.thin = c.value("thin", p.config.thin);
                p.config.proposal_std = c.value("proposal_std", p.config.proposal_std);
                p.config.seed = c.value("seed", p.config.seed);
            }
        }
        return p;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("predictor: ") + e.what());
    }
}

BoundPredictor::BoundPredictor(const FairPredictor& predictor, const CompiledModel& model) : predictor_(&predictor) {
    for (const auto& name : predictor.inputs()) index_.push_back(model.index(name));
}

double BoundPredictor::operator()(std::span<const double> world) const {
    std::vector<double> values(index_.size());
    for (std::size_t j = 0; j < index_.size(); ++j) values[j] = world[index_[j]];
    return predictor_->predict(values);
}

InputManifest level1_inputs(const CausalModel& model) {
    const auto protected_vars = model.names_with_role(Role::Protected);
    const std::set<VariableId> allowed =
        non_descendants(model, std::set<VariableId>(protected_vars.begin(), protected_vars.end()));
    InputManifest m;
    for (const auto& v : model.variables) {
        if (v.role == Role::Observed && allowed.contains(v.name)) m.observable_inputs.push_back(v.name);
    }
    return m;
}

std::vector<VariableId> abduction_evidence(const CausalModel& model, const Dataset& data) {
    std::vector<VariableId> out;
    for (const auto& v : model.variables) {
        if ((v.role == Role::Protected || v.role == Role::Observed) && data.column_index(v.name)) {
            out.push_back(v.name);
        }
    }
    return out;
}

VariableId outcome_of(const CausalModel& model) {
    const auto outcomes = model.names_with_role(Role::Outcome);
    if (outcomes.size() != 1) throw Error(ErrorCode::InvalidModel, "model must have exactly one outcome variable");
    return outcomes.front();
}

namespace {

/// True when the evidence fits the single-latent template and at least one
/// child of the latent is non-Gaussian (otherwise exact abduction applies).
bool single_latent_applies(const CausalModel& model, const std::vector<VariableId>& evidence) {
    const auto backgrounds = model.names_with_role(Role::Background);
    if (backgrounds.size() != 1) return false;
    const VariableId& k = backgrounds.front();
    if (!std::holds_alternative<NormalPrior>(model.priors.at(k))) return false;
    const std::set<VariableId> ev(evidence.begin(), evidence.end());
    bool any_child = false;
    bool non_gaussian = false;
    for (const auto& name : evidence) {
        const StructuralEquation* eq = model.equation_for(name);
        if (!eq) return false;
        bool child = false;
        for (const auto& p : eq->parents) {
            if (p == k) child = true;
            else if (!ev.contains(p)) return false;
        }
        if (!child) continue;
        any_child = true;
        if (auto* lg = std::get_if<LinearGaussian>(&eq->family)) {
            if (!(lg->noise_std > 0.0)) return false;
        } else if (std::holds_alternative<DeterministicTable>(eq->family)) {
            return false;
        } else {
            non_gaussian = true;
        }
    }
    return any_child && non_gaussian;
}

}  // namespace

PosteriorDraws posterior_draws(const CausalModel& model, const Dataset& data, const std::vector<VariableId>& evidence,
                               const McmcConfig& config, const std::vector<std::size_t>& rows) {
    if (!single_latent_applies(model, evidence)) return abduct_records(model, data, evidence, config, rows);
    const Dataset subset = rows.empty() ? data : data.select_rows(rows);
    double acceptance = 0.0;
    const Eigen::MatrixXd k = sample_single_latent(model, subset, evidence, config, &acceptance);
    const auto kidx = *model.index_of(model.names_with_role(Role::Background).front());
    PosteriorDraws out;
    for (const auto& v : model.variables) out.variables.push_back(v.name);
    out.records.resize(subset.rows());
    for (std::size_t i = 0; i < subset.rows(); ++i) {
        out.record_ids.push_back(rows.empty() ? i : rows[i]);
        RecordDraws& r = out.records[i];
        r.latent = Eigen::MatrixXd::Constant(k.cols(), static_cast<Eigen::Index>(model.variables.size()),
                                             std::numeric_limits<double>::quiet_NaN());
        r.latent.col(static_cast<Eigen::Index>(kidx)) = k.row(static_cast<Eigen::Index>(i)).transpose();
        r.acceptance = acceptance;
    }
    return out;
}

namespace {

LinearFit fit_head(const DesignMatrix& X, const Eigen::VectorXd& y, Head head) {
    return head == Head::Linear ? ols_fit(X, y) : logistic_fit(X, y);
}

void adopt_fit(FairPredictor& p, const LinearFit& fit) {
    p.weights = fit.weights;
    p.labels = fit.labels;
    p.loss_trace = fit.loss_trace;
    p.separation_warning = fit.separation_warning;
}

}  // namespace

FairPredictor fair_learning(const Dataset& data, const CausalModel& model, const InputManifest& manifest, Head loss,
                            const McmcConfig& config, std::optional<VariableId> outcome) {
    config.validate();
    validate_manifest(manifest, model);
    if (manifest.background_inputs.empty() && manifest.observable_inputs.empty()) {
        throw Error(ErrorCode::EmptyInputs, "the manifest selects no inputs");
    }
    const VariableId target = outcome ? *outcome : outcome_of(model);
    FairPredictor p;
    p.manifest = manifest;
    p.head = loss;
    p.recipe = "fair_learning";
    p.config = config;
    p.encoding = make_encoding(p.inputs(), &model);
    const auto& y_col = data.column(target);

    if (manifest.background_inputs.empty()) {
        // Deterministic inputs: every posterior draw yields the same row.
        p.m = 1;
        adopt_fit(p, fit_head(design_matrix(data, p.encoding), Eigen::Map<const Eigen::VectorXd>(
                                                                   y_col.data(), static_cast<Eigen::Index>(y_col.size())),
                              loss));
        return p;
    }

    p.evidence = abduction_evidence(model, data);
    const PosteriorDraws draws = posterior_draws(model, data, p.evidence, config);
    const std::size_t n = data.rows();
    const std::size_t m = config.draws();
    p.m = m;
    std::vector<std::size_t> bg_idx;
    for (const auto& name : manifest.background_inputs) bg_idx.push_back(*model.index_of(name));
    std::vector<VariableId> obs = manifest.observable_inputs;
    std::sort(obs.begin(), obs.end());
    std::vector<const std::vector<double>*> obs_cols;
    for (const auto& name : obs) obs_cols.push_back(&data.column(name));

    const std::size_t width = p.encoding.width();
    DesignMatrix dm;
    dm.labels = p.encoding.labels();
    dm.X.resize(static_cast<Eigen::Index>(n * m), static_cast<Eigen::Index>(width));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n * m));
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<double> row(bg_idx.size() + obs_cols.size()), out(width);
        for (std::size_t i = begin; i < end; ++i) {
            const Eigen::MatrixXd& latent = draws.records[i].latent;
            for (std::size_t j = 0; j < obs_cols.size(); ++j) row[bg_idx.size() + j] = (*obs_cols[j])[i];
            for (std::size_t d = 0; d < m; ++d) {
                for (std::size_t j = 0; j < bg_idx.size(); ++j) {
                    row[j] = latent(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(bg_idx[j]));
                }
                p.encoding.encode(row, out);
                const auto r = static_cast<Eigen::Index>(i * m + d);
                for (std::size_t k = 0; k < width; ++k) dm.X(r, static_cast<Eigen::Index>(k)) = out[k];
                y[r] = y_col[i];
            }
        }
    });
    adopt_fit(p, fit_head(dm, y, loss));
    return p;
}

std::vector<double> fair_predict_all(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                                     const McmcConfig& config) {
    if (predictor.manifest.background_inputs.empty()) return predictor.predict(data);
    const auto evidence = abduction_evidence(model, data);
    const PosteriorDraws draws = posterior_draws(model, data, evidence, config);
    std::vector<std::size_t> bg_idx;
    for (const auto& name : predictor.manifest.background_inputs) bg_idx.push_back(*model.index_of(name));
    std::vector<VariableId> obs = predictor.manifest.observable_inputs;
    std::sort(obs.begin(), obs.end());
    std::vector<const std::vector<double>*> obs_cols;
    for (const auto& name : obs) obs_cols.push_back(&data.column(name));
    std::vector<double> out(data.rows());
    parallel_for(data.rows(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> row(bg_idx.size() + obs_cols.size());
        for (std::size_t i = begin; i < end; ++i) {
            const Eigen::MatrixXd& latent = draws.records[i].latent;
            for (std::size_t j = 0; j < obs_cols.size(); ++j) row[bg_idx.size() + j] = (*obs_cols[j])[i];
            double sum = 0.0;
            for (Eigen::Index d = 0; d < latent.rows(); ++d) {
                for (std::size_t j = 0; j < bg_idx.size(); ++j) {
                    row[j] = latent(d, static_cast<Eigen::Index>(bg_idx[j]));
                }
                sum += predictor.predict(row);
            }
            out[i] = sum / static_cast<double>(latent.rows());
        }
    });
    return out;
}

double fair_predict(const FairPredictor& predictor, const CausalModel& model, const Evidence& record,
                    const McmcConfig& config) {
    Dataset one;
    for (const auto& [name, value] : record) one.add_column(name, {value});
    return fair_predict_all(predictor, model, one, config).front();
}

FairPredictor baseline_fit(const Dataset& data, const CausalModel& model, BaselineKind kind, const VariableId& outcome,
                           Head head) {
    FairPredictor p;
    p.head = head;
    p.recipe = kind == BaselineKind::Full ? "full" : "unaware";
    p.manifest.include_protected = kind == BaselineKind::Full;
    for (const auto& v : model.variables) {
        if (v.name == outcome || !data.column_index(v.name)) continue;
        if (v.role == Role::Observed || (v.role == Role::Protected && kind == BaselineKind::Full)) {
            p.manifest.observable_inputs.push_back(v.name);
        }
    }
    if (p.manifest.observable_inputs.empty()) throw Error(ErrorCode::EmptyInputs, "baseline has no inputs");
    p.m = 1;
    p.encoding = make_encoding(p.inputs(), &model);
    const auto& y_col = data.column(outcome);
    adopt_fit(p, fit_head(design_matrix(data, p.encoding),
                          Eigen::Map<const Eigen::VectorXd>(y_col.data(), static_cast<Eigen::Index>(y_col.size())),
                          head));
    return p;
}

}  // namespace cfair
