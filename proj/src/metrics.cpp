#include "cfair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "cfair/error.hpp"
#include "cfair/io.hpp"
#include "cfair/parallel.hpp"
#include "cfair/rng.hpp"
#include "cfair/scm.hpp"

namespace cfair {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kStrictTolerance = 1e-9;
constexpr double kRejectionBand = 0.05;
constexpr std::size_t kMaxEnumeration = 1000000;
constexpr std::uint64_t kAuditTag = 0x41554454ULL;
constexpr std::uint64_t kAceTag = 0x41434531ULL;

std::vector<double> sorted(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    std::sort(out.begin(), out.end());
    return out;
}

double one_sided(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i + 1 < a.size() && a[i + 1] == a[i]) continue;
        const double fa = static_cast<double>(i + 1) / na;
        const double fb = static_cast<double>(std::upper_bound(b.begin(), b.end(), a[i] + tol) - b.begin()) / nb;
        d = std::max(d, fa - fb);
    }
    return d;
}

void check_value(const CausalModel& model, const VariableId& attribute, double value) {
    if (!model.has(attribute)) throw Error(ErrorCode::UnknownVariable, "unknown attribute '" + attribute + "'");
    const Variable& v = model.variable(attribute);
    if (v.role == Role::Background) {
        throw Error(ErrorCode::InterveneOnBackground, "cannot audit background '" + attribute + "'");
    }
    if (!v.domain.contains(value)) {
        throw Error(ErrorCode::UnattainableValue, "value is outside the domain of '" + attribute + "'");
    }
}

std::vector<double> latent_row(const Eigen::MatrixXd& latent, Eigen::Index d) {
    std::vector<double> row(static_cast<std::size_t>(latent.cols()));
    for (Eigen::Index v = 0; v < latent.cols(); ++v) row[static_cast<std::size_t>(v)] = latent(d, v);
    return row;
}

/// Predictions under A<-a and A<-a' for shared draws of each audited record.
struct Branches {
    std::vector<std::size_t> rows;
    std::vector<std::vector<double>> factual;
    std::vector<std::vector<double>> counterfactual;
};

Branches run_branches(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                      const VariableId& attribute, double a, double a_prime, const McmcConfig& config,
                      const AuditOptions& options, const std::vector<VariableId>& hold) {
    config.validate();
    if (options.draws_per_record == 0) throw Error(ErrorCode::Config, "draws_per_record must be positive");
    check_value(model, attribute, a);
    check_value(model, attribute, a_prime);
    Branches out;
    out.rows = audit_rows(data, attribute, a, options.max_records, config.seed);
    if (out.rows.empty()) throw Error(ErrorCode::UnattainableValue, "no record has '" + attribute + "' at the audited value");

    McmcConfig cfg = config;
    cfg.kept = (options.draws_per_record + cfg.chains - 1) / cfg.chains;
    const auto evidence = abduction_evidence(model, data);
    const PosteriorDraws draws = posterior_draws(model, data, evidence, cfg, out.rows);

    const CompiledModel cm(model);
    std::vector<std::size_t> eidx;
    for (const auto& name : evidence) eidx.push_back(cm.index(name));
    const WorldPlan fplan(cm, eidx, {{attribute, a}});
    WorldPlan cplan(cm, eidx, {{attribute, a_prime}});
    std::vector<std::size_t> hold_idx;
    for (const auto& name : hold) hold_idx.push_back(cm.index(name));
    cplan.hold_factual(hold_idx);
    const BoundPredictor g(predictor, cm);

    std::vector<const std::vector<double>*> cols;
    for (const auto& name : evidence) cols.push_back(&data.column(name));
    const std::size_t n = out.rows.size();
    const std::size_t m = options.draws_per_record;
    out.factual.assign(n, std::vector<double>(m));
    out.counterfactual.assign(n, std::vector<double>(m));
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<double> ev(cols.size()), fw(cm.size()), cw(cm.size());
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < cols.size(); ++j) ev[j] = (*cols[j])[out.rows[i]];
            const Eigen::MatrixXd& latent = draws.records[i].latent;
            for (std::size_t d = 0; d < m; ++d) {
                const auto row = latent_row(latent, static_cast<Eigen::Index>(d));
                const KeyedNoise noise = world_noise(cfg, out.rows[i], d);
                fplan.evaluate(row, ev, noise, fw);
                cplan.evaluate(row, ev, noise, cw, fw);
                out.factual[i][d] = g(fw);
                out.counterfactual[i][d] = g(cw);
            }
        }
    });
    return out;
}

FairnessReport base_report(const std::string& criterion, const VariableId& attribute, double a, double a_prime,
                           const AuditOptions& options, const Branches& b) {
    FairnessReport r;
    r.criterion = criterion;
    r.attribute = attribute;
    r.a = a;
    r.a_prime = a_prime;
    r.draws_per_record = options.draws_per_record;
    const std::size_t keep = std::min(options.density_per_record, options.draws_per_record);
    for (std::size_t i = 0; i < b.rows.size(); ++i) {
        r.factual_density.insert(r.factual_density.end(), b.factual[i].begin(), b.factual[i].begin() + keep);
        r.counterfactual_density.insert(r.counterfactual_density.end(), b.counterfactual[i].begin(),
                                        b.counterfactual[i].begin() + keep);
    }
    return r;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

FairnessReport ks_report(const std::string& criterion, const VariableId& attribute, double a, double a_prime,
                         const AuditOptions& options, const Branches& b) {
    FairnessReport r = base_report(criterion, attribute, a, a_prime, options, b);
    double tol = options.ks_tolerance;
    if (tol < 0.0) {
        double s = 0.0, s2 = 0.0, n = 0.0;
        for (const auto& f : b.factual) {
            for (double x : f) {
                s += x;
                s2 += x * x;
                n += 1.0;
            }
        }
        const double var = n > 1.0 ? std::max(0.0, (s2 - s * s / n) / (n - 1.0)) : 0.0;
        tol = std::max(kStrictTolerance, 0.01 * std::sqrt(var));
    }
    r.tolerance = tol;
    r.threshold = options.threshold;
    std::vector<double> stats(b.rows.size());
    parallel_for(b.rows.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) stats[i] = ks_statistic(b.factual[i], b.counterfactual[i], tol);
    });
    for (std::size_t i = 0; i < b.rows.size(); ++i) {
        r.records.push_back({b.rows[i], stats[i], mean_of(b.counterfactual[i]) - mean_of(b.factual[i])});
        r.aggregate = std::max(r.aggregate, stats[i]);
    }
    r.pass = r.aggregate <= r.threshold;
    return r;
}

}  // namespace

double ks_statistic(std::span<const double> a, std::span<const double> b, double tolerance) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::DegenerateInput, "KS needs two non-empty samples");
    const auto sa = sorted(a), sb = sorted(b);
    return std::max(one_sided(sa, sb, tolerance), one_sided(sb, sa, tolerance));
}

double FairnessReport::mean_abs_shift() const {
    double s = 0.0;
    for (const auto& r : records) s += std::abs(r.mean_shift);
    return records.empty() ? kNaN : s / static_cast<double>(records.size());
}

json FairnessReport::to_json() const {
    json recs = json::array();
    for (const auto& r : records) {
        recs.push_back({{"record", r.record}, {"statistic", r.statistic}, {"mean_shift", r.mean_shift}});
    }
    return json{{"criterion", criterion},
                {"attribute", attribute},
                {"a", a},
                {"a_prime", a_prime},
                {"draws_per_record", draws_per_record},
                {"tolerance", tolerance},
                {"threshold", threshold},
                {"aggregate", aggregate},
                {"mean_abs_shift", records.empty() ? json(nullptr) : json(mean_abs_shift())},
                {"verdict", pass ? "PASS" : "FAIL"},
                {"records", recs}};
}

std::string FairnessReport::density_csv() const {
    std::ostringstream out;
    out << "factual,counterfactual\n";
    for (std::size_t i = 0; i < factual_density.size(); ++i)
        out << format_double(factual_density[i]) << "," << format_double(counterfactual_density[i]) << "\n";
    return out.str();
}

std::vector<std::size_t> audit_rows(const Dataset& data, const VariableId& attribute, double a,
                                    std::size_t max_records, std::uint64_t seed) {
    const auto& col = data.column(attribute);
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (std::size_t i = 0; i < col.size(); ++i) {
        if (col[i] == a) keyed.emplace_back(combine_keys(combine_keys(seed, kAuditTag), i), i);
    }
    if (keyed.size() > max_records) {
        std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(max_records), keyed.end());
        keyed.resize(max_records);
    }
    std::vector<std::size_t> rows;
    for (const auto& k : keyed) rows.push_back(k.second);
    std::sort(rows.begin(), rows.end());
    return rows;
}

FairnessReport cf_fairness_test(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                                const VariableId& attribute, double a, double a_prime, const McmcConfig& config,
                                const AuditOptions& options) {
    const Branches b = run_branches(predictor, model, data, attribute, a, a_prime, config, options, {});
    return ks_report("cf", attribute, a, a_prime, options, b);
}

FairnessReport strict_cf_check(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                               const VariableId& attribute, double a, double a_prime, const McmcConfig& config,
                               const AuditOptions& options) {
    const Branches b = run_branches(predictor, model, data, attribute, a, a_prime, config, options, {});
    FairnessReport r = base_report("strict", attribute, a, a_prime, options, b);
    r.tolerance = kStrictTolerance;
    r.threshold = 0.0;
    std::size_t violations = 0, total = 0;
    for (std::size_t i = 0; i < b.rows.size(); ++i) {
        std::size_t v = 0;
        for (std::size_t d = 0; d < b.factual[i].size(); ++d) {
            if (!(std::abs(b.factual[i][d] - b.counterfactual[i][d]) <= kStrictTolerance)) ++v;
        }
        violations += v;
        total += b.factual[i].size();
        r.records.push_back({b.rows[i], static_cast<double>(v) / static_cast<double>(b.factual[i].size()),
                             mean_of(b.counterfactual[i]) - mean_of(b.factual[i])});
    }
    r.aggregate = static_cast<double>(violations) / static_cast<double>(total);
    r.pass = violations == 0;
    return r;
}

void validate_paths(const CausalModel& model, const PathSet& paths) {
    for (const auto& path : paths) {
        if (path.empty()) throw Error(ErrorCode::InvalidPath, "empty path");
        for (const auto& name : path) {
            if (!model.has(name)) throw Error(ErrorCode::InvalidPath, "path names unknown variable '" + name + "'");
        }
        if (model.variable(path.front()).role != Role::Protected) {
            throw Error(ErrorCode::InvalidPath, "path must start at a protected variable");
        }
        for (std::size_t i = 1; i < path.size(); ++i) {
            const StructuralEquation* eq = model.equation_for(path[i]);
            if (!eq || std::find(eq->parents.begin(), eq->parents.end(), path[i - 1]) == eq->parents.end()) {
                throw Error(ErrorCode::InvalidPath, "no edge " + path[i - 1] + " -> " + path[i]);
            }
        }
    }
}

std::vector<VariableId> off_path_observables(const CausalModel& model, const PathSet& paths) {
    std::set<VariableId> on;
    for (const auto& p : paths) on.insert(p.begin(), p.end());
    std::vector<VariableId> out;
    for (const auto& v : model.variables) {
        if ((v.role == Role::Observed || v.role == Role::Outcome) && !on.contains(v.name)) out.push_back(v.name);
    }
    return out;
}

FairnessReport path_cf_test(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                            const PathSet& unfair_paths, const VariableId& attribute, double a, double a_prime,
                            const McmcConfig& config, const AuditOptions& options) {
    validate_paths(model, unfair_paths);
    const auto hold = off_path_observables(model, unfair_paths);
    const Branches b = run_branches(predictor, model, data, attribute, a, a_prime, config, options, hold);
    return ks_report("path_cf", attribute, a, a_prime, options, b);
}

GroupGaps group_gaps(std::span<const double> predictions, const Dataset& data, const VariableId& outcome,
                     const VariableId& attribute, double a, double a_prime, bool threshold) {
    const auto& attr = data.column(attribute);
    if (predictions.size() != attr.size()) throw Error(ErrorCode::DimensionMismatch, "one prediction per row expected");
    const std::vector<double>* y = data.column_index(outcome) ? &data.column(outcome) : nullptr;
    bool binary = y != nullptr;
    if (y) {
        for (double v : *y) binary = binary && (v == 0.0 || v == 1.0);
    }
    auto decision = [&](std::size_t i) { return threshold ? (predictions[i] >= 0.5 ? 1.0 : 0.0) : predictions[i]; };
    auto group_mean = [&](double value, auto&& keep) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < attr.size(); ++i) {
            if (attr[i] == value && keep(i)) {
                s += decision(i);
                ++n;
            }
        }
        return n ? s / static_cast<double>(n) : kNaN;
    };
    GroupGaps g;
    g.thresholded = threshold;
    const auto all = [](std::size_t) { return true; };
    const double pa = group_mean(a, all), pb = group_mean(a_prime, all);
    if (std::isnan(pa) || std::isnan(pb)) throw Error(ErrorCode::EmptyGroup, "a protected group has no records");
    g.dp_gap = std::abs(pa - pb);
    g.eo_gap = kNaN;
    g.parity_gap = kNaN;
    if (binary) {
        const auto positive = [&](std::size_t i) { return (*y)[i] == 1.0; };
        const double ea = group_mean(a, positive), eb = group_mean(a_prime, positive);
        if (std::isnan(ea) || std::isnan(eb)) throw Error(ErrorCode::EmptyGroup, "a protected group has no positive outcome");
        g.eo_gap = std::abs(ea - eb);
        if (threshold) {
            auto ppv = [&](double value) {
                double s = 0.0;
                std::size_t n = 0;
                for (std::size_t i = 0; i < attr.size(); ++i) {
                    if (attr[i] == value && decision(i) == 1.0) {
                        s += (*y)[i];
                        ++n;
                    }
                }
                return n ? s / static_cast<double>(n) : kNaN;
            };
            g.parity_gap = std::abs(ppv(a) - ppv(a_prime));
        }
    }
    return g;
}

GroupGaps group_gaps(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                     const VariableId& outcome, const VariableId& attribute, double a, double a_prime,
                     const McmcConfig& config) {
    const auto preds = fair_predict_all(predictor, model, data, config);
    return group_gaps(preds, data, outcome, attribute, a, a_prime, predictor.head == Head::Logistic);
}

bool ftu_check(const FairPredictor& predictor, const CausalModel& model) {
    if (predictor.manifest.include_protected) return false;
    for (const auto& name : predictor.inputs()) {
        if (model.has(name) && model.variable(name).role == Role::Protected) return false;
    }
    return true;
}

namespace {

double interventional_mean(const FairPredictor& predictor, const CausalModel& model, const Evidence& x,
                           const VariableId& attribute, double value, std::size_t n_draws, std::uint64_t seed) {
    const CausalModel intervened = intervene(model, {{attribute, value}});
    auto cm = std::make_shared<const CompiledModel>(intervened);
    const BoundPredictor g(predictor, *cm);
    std::vector<VariableId> names;
    std::vector<double> values;
    for (const auto& [name, v] : x) {
        if (name == attribute) continue;
        names.push_back(name);
        values.push_back(v);
    }
    McmcConfig cfg;
    cfg.seed = seed;
    std::unique_ptr<Abductor> ab;
    try {
        ab = std::make_unique<Abductor>(cm, names, AbductionMethod::Exact);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NotLinearGaussian) throw;
    }
    std::vector<double> world(cm->size());
    if (ab) {
        const RecordDraws draws = ab->sample(values, cfg, 0, n_draws);
        const WorldPlan plan(*cm, ab->evidence_index(), {});
        double s = 0.0;
        for (std::size_t d = 0; d < n_draws; ++d) {
            plan.evaluate(latent_row(draws.latent, static_cast<Eigen::Index>(d)), values, world_noise(cfg, 0, d), world);
            s += g(world);
        }
        return s / static_cast<double>(n_draws);
    }

    // Rejection: keep joint draws whose X lies within the band around x.
    std::vector<std::size_t> idx;
    std::vector<char> finite;
    for (const auto& name : names) {
        idx.push_back(cm->index(name));
        finite.push_back(intervened.variable(name).domain.finite());
    }
    double s = 0.0;
    std::size_t accepted = 0;
    const std::size_t batch = std::max<std::size_t>(n_draws, 1000);
    for (std::size_t round = 0; accepted < n_draws && round < 1000; ++round) {
        const Dataset d = ancestral_sample(intervened, batch, combine_keys(combine_keys(seed, kAceTag), round));
        std::vector<const std::vector<double>*> cols(cm->size());
        for (std::size_t v = 0; v < cm->size(); ++v) cols[v] = &d.column(cm->name(v));
        for (std::size_t r = 0; r < batch && accepted < n_draws; ++r) {
            bool keep = true;
            for (std::size_t j = 0; j < idx.size() && keep; ++j) {
                const double v = (*cols[idx[j]])[r];
                keep = finite[j] ? v == values[j] : std::abs(v - values[j]) <= kRejectionBand;
            }
            if (!keep) continue;
            for (std::size_t v = 0; v < cm->size(); ++v) world[v] = (*cols[v])[r];
            s += g(world);
            ++accepted;
        }
    }
    if (accepted == 0) throw Error(ErrorCode::NoAcceptedSamples, "no joint draw matched the conditioning values");
    return s / static_cast<double>(accepted);
}

}  // namespace

double ace(const FairPredictor& predictor, const CausalModel& model, const Evidence& x, const VariableId& attribute,
           double a, double a_prime, std::size_t n_draws, std::uint64_t seed) {
    if (n_draws == 0) throw Error(ErrorCode::Config, "n_draws must be positive");
    check_value(model, attribute, a);
    check_value(model, attribute, a_prime);
    if (a == a_prime) return 0.0;
    return interventional_mean(predictor, model, x, attribute, a, n_draws, seed) -
           interventional_mean(predictor, model, x, attribute, a_prime, n_draws, seed);
}

double counterfactual_difference(const FairPredictor& predictor, const CausalModel& model, const Evidence& record,
                                 const VariableId& attribute, double a, double a_prime, const McmcConfig& config) {
    check_value(model, attribute, a);
    check_value(model, attribute, a_prime);
    auto cm = std::make_shared<const CompiledModel>(model);
    std::vector<VariableId> names;
    std::vector<double> values;
    for (const auto& [name, v] : record) {
        names.push_back(name);
        values.push_back(v);
    }
    const Abductor ab(cm, names);
    const RecordDraws draws = ab.sample(values, config, 0);
    const WorldPlan fplan(*cm, ab.evidence_index(), {{attribute, a}});
    const WorldPlan cplan(*cm, ab.evidence_index(), {{attribute, a_prime}});
    const BoundPredictor g(predictor, *cm);
    std::vector<double> fw(cm->size()), cw(cm->size());
    double s = 0.0;
    const auto n = static_cast<std::size_t>(draws.latent.rows());
    for (std::size_t d = 0; d < n; ++d) {
        const auto row = latent_row(draws.latent, static_cast<Eigen::Index>(d));
        const KeyedNoise noise = world_noise(config, 0, d);
        fplan.evaluate(row, values, noise, fw);
        cplan.evaluate(row, values, noise, cw);
        s += g(fw) - g(cw);
    }
    return s / static_cast<double>(n);
}

namespace {

bool deterministic(const CompiledNode& node) {
    return node.kind == NodeKind::Table || (node.kind == NodeKind::LinearGaussian && node.sigma == 0.0);
}

}  // namespace

double prob_sufficiency(const CausalModel& model, const FairPredictor& predictor, const Evidence& record, double y,
                        const VariableId& attribute, double a_prime, const McmcConfig& config, double band) {
    auto it = record.find(attribute);
    if (it == record.end()) throw Error(ErrorCode::Config, "record must include the protected attribute");
    const double a = it->second;
    check_value(model, attribute, a);
    check_value(model, attribute, a_prime);
    auto cm = std::make_shared<const CompiledModel>(model);
    std::vector<VariableId> names;
    std::vector<double> values;
    for (const auto& [name, v] : record) {
        names.push_back(name);
        values.push_back(v);
    }
    std::vector<std::size_t> eidx;
    for (const auto& name : names) eidx.push_back(cm->index(name));
    const WorldPlan fplan(*cm, eidx, {{attribute, a}});
    const WorldPlan cplan(*cm, eidx, {{attribute, a_prime}});
    const BoundPredictor g(predictor, *cm);
    const std::size_t n = cm->size();

    // Exact enumeration applies when every relevant latent is categorical and
    // every regenerated node on the way to the predictor is deterministic.
    std::vector<std::size_t> targets = eidx;
    for (const auto& name : predictor.inputs()) targets.push_back(cm->index(name));
    const auto relevant = cm->ancestor_mask(targets);
    std::vector<std::size_t> input_idx(targets.begin() + static_cast<std::ptrdiff_t>(eidx.size()), targets.end());
    const auto feeds_predictor = cm->ancestor_mask(input_idx);
    const auto desc = cm->descendant_mask({cm->index(attribute)});
    std::vector<char> observed(n, 0);
    for (auto v : eidx) observed[v] = 1;
    bool enumerable = true;
    std::vector<std::size_t> cats;
    double states = 1.0;
    const std::size_t attr_idx = cm->index(attribute);
    for (std::size_t v = 0; v < n && enumerable; ++v) {
        if (!relevant[v] || v == attr_idx) continue;
        const CompiledNode& node = cm->node(v);
        if (node.kind == NodeKind::CategoricalBackground) {
            cats.push_back(v);
            states *= static_cast<double>(node.cat_values.size());
        } else if (node.kind == NodeKind::NormalBackground) {
            enumerable = false;
        } else if (!deterministic(node)) {
            // unobserved nodes and regenerated observed descendants need a
            // deterministic equation
            enumerable = observed[v] && !(desc[v] && feeds_predictor[v]);
        }
    }
    enumerable = enumerable && states <= static_cast<double>(kMaxEnumeration);

    double mass = 0.0, flipped = 0.0;
    if (enumerable) {
        std::vector<double> latent(n, 0.0), fw(n), cw(n);
        for (std::size_t v = 0; v < n; ++v) {
            const CompiledNode& node = cm->node(v);
            if (node.kind == NodeKind::NormalBackground) latent[v] = node.prior_mean;
            if (node.kind != NodeKind::NormalBackground && node.kind != NodeKind::CategoricalBackground) latent[v] = kNaN;
            if (node.kind == NodeKind::CategoricalBackground) latent[v] = node.cat_values.front();
        }
        const KeyedNoise noise{config.seed, 0, 0};
        std::vector<double> forward(n, 0.0);
        const auto total = static_cast<std::size_t>(states);
        for (std::size_t s = 0; s < total; ++s) {
            std::size_t rem = s;
            double lw = 0.0;
            for (auto v : cats) {
                const CompiledNode& node = cm->node(v);
                const std::size_t k = rem % node.cat_values.size();
                rem /= node.cat_values.size();
                latent[v] = node.cat_values[k];
                lw += std::log(node.cat_probs[k]);
            }
            // evidence likelihood under this background configuration
            for (std::size_t v : cm->order()) {
                const CompiledNode& node = cm->node(v);
                if (cm->role(v) == Role::Background) {
                    forward[v] = latent[v];
                } else if (observed[v]) {
                    const double obs = values[static_cast<std::size_t>(
                        std::find(eidx.begin(), eidx.end(), v) - eidx.begin())];
                    lw += node.log_likelihood(forward, obs);
                    forward[v] = obs;
                } else if (relevant[v]) {
                    forward[v] = node.value_from_noise(forward, 0.5);
                }
            }
            if (!(lw > -std::numeric_limits<double>::infinity())) continue;
            fplan.evaluate(latent, values, noise, fw);
            if (!(std::abs(g(fw) - y) <= band)) continue;
            cplan.evaluate(latent, values, noise, cw);
            const double w = std::exp(lw);
            mass += w;
            if (!(std::abs(g(cw) - y) <= band)) flipped += w;
        }
        if (!(mass > 0.0)) throw Error(ErrorCode::ZeroPosteriorMass, "no background configuration yields the decision");
        return flipped / mass;
    }

    const Abductor ab(cm, names);
    const RecordDraws draws = ab.sample(values, config, 0);
    std::vector<double> fw(n), cw(n);
    for (Eigen::Index d = 0; d < draws.latent.rows(); ++d) {
        const auto row = latent_row(draws.latent, d);
        const KeyedNoise noise = world_noise(config, 0, static_cast<std::size_t>(d));
        fplan.evaluate(row, values, noise, fw);
        if (!(std::abs(g(fw) - y) <= band)) continue;
        cplan.evaluate(row, values, noise, cw);
        mass += 1.0;
        if (!(std::abs(g(cw) - y) <= band)) flipped += 1.0;
    }
    if (mass == 0.0) {
        throw Error(ErrorCode::ConstraintNotInvertible, "no posterior draw reproduces the decision within the band");
    }
    return flipped / mass;
}

}  // namespace cfair
