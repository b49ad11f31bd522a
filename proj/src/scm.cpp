#include "cfair/scm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <regex>

#include "cfair/parallel.hpp"

namespace cfair {

namespace {

const std::regex& name_pattern() {
    static const std::regex re(R"(^[A-Za-z_][A-Za-z0-9_]*(@f'?)?$)");
    return re;
}

std::size_t family_arity(const Family& f) {
    if (auto* lg = std::get_if<LinearGaussian>(&f)) return lg->weights.size();
    if (auto* p = std::get_if<PoissonLogLink>(&f)) return p->weights.size();
    if (auto* b = std::get_if<BernoulliLogit>(&f)) return b->weights.size();
    return std::numeric_limits<std::size_t>::max();
}

void add(std::vector<ValidationIssue>& errors, ErrorCode code, std::string msg) {
    errors.push_back({code, std::move(msg)});
}

std::string fmt_tuple(const std::vector<double>& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(t[i]);
    }
    return s + ")";
}

void check_table(const CausalModel& model, const StructuralEquation& eq, const DeterministicTable& table,
                 std::vector<ValidationIssue>& errors) {
    std::vector<const Domain*> domains;
    for (const auto& p : eq.parents) {
        auto idx = model.index_of(p);
        if (!idx) return;  // reported as DanglingParent
        const Domain& d = model.variables[*idx].domain;
        if (!d.finite()) {
            add(errors, ErrorCode::InvalidEquation,
                "table for '" + eq.child + "' has continuous parent '" + p + "'");
            return;
        }
        domains.push_back(&d);
    }
    for (const auto& [key, value] : table.entries) {
        if (key.size() != eq.parents.size()) {
            add(errors, ErrorCode::WeightArityMismatch, "table entry for '" + eq.child + "' has wrong key length");
            return;
        }
    }
    const Domain& child_domain = model.variable(eq.child).domain;
    for (const auto& [key, value] : table.entries) {
        if (!child_domain.contains(value)) {
            add(errors, ErrorCode::DomainViolation,
                "table value " + std::to_string(value) + " outside domain of '" + eq.child + "'");
        }
    }
    // totality: enumerate the product of parent domains
    std::vector<std::size_t> idx(domains.size(), 0);
    std::vector<double> key(domains.size());
    while (true) {
        for (std::size_t i = 0; i < domains.size(); ++i) key[i] = domains[i]->values[idx[i]];
        if (!table.entries.count(key)) {
            add(errors, ErrorCode::InvalidEquation,
                "table for '" + eq.child + "' is missing parent values " + fmt_tuple(key));
            return;
        }
        std::size_t pos = 0;
        while (pos < idx.size() && ++idx[pos] == domains[pos]->values.size()) idx[pos++] = 0;
        if (pos == idx.size()) break;
    }
}

}  // namespace

bool ValidationResult::has(ErrorCode code) const {
    return std::any_of(errors.begin(), errors.end(), [code](const auto& e) { return e.code == code; });
}

ValidationResult validate_model(const CausalModel& model) {
    ValidationResult result;
    auto& errors = result.errors;
    const std::size_t n = model.variables.size();

    std::map<VariableId, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = model.variables[i];
        if (!std::regex_match(v.name, name_pattern())) {
            add(errors, ErrorCode::InvalidName, "invalid variable name '" + v.name + "'");
        }
        if (!index.emplace(v.name, i).second) {
            add(errors, ErrorCode::DuplicateVariable, "duplicate variable '" + v.name + "'");
        }
    }

    std::vector<int> equation_count(n, 0);
    std::vector<std::vector<std::size_t>> parents(n);
    for (const auto& eq : model.equations) {
        auto it = index.find(eq.child);
        if (it == index.end()) {
            add(errors, ErrorCode::UnknownVariable, "equation for unknown variable '" + eq.child + "'");
            continue;
        }
        const std::size_t child = it->second;
        if (model.variables[child].role == Role::Background) {
            add(errors, ErrorCode::BackgroundHasParents, "background variable '" + eq.child + "' has an equation");
            continue;
        }
        if (++equation_count[child] > 1) {
            add(errors, ErrorCode::InvalidEquation, "more than one equation for '" + eq.child + "'");
            continue;
        }
        bool parents_ok = true;
        for (const auto& p : eq.parents) {
            auto pit = index.find(p);
            if (pit == index.end()) {
                add(errors, ErrorCode::DanglingParent, "'" + eq.child + "' references unknown parent '" + p + "'");
                parents_ok = false;
            } else {
                parents[child].push_back(pit->second);
            }
        }
        const std::size_t arity = family_arity(eq.family);
        if (arity != std::numeric_limits<std::size_t>::max() && arity != eq.parents.size()) {
            add(errors, ErrorCode::WeightArityMismatch,
                "'" + eq.child + "' has " + std::to_string(eq.parents.size()) + " parents but " +
                    std::to_string(arity) + " weights");
        }
        if (auto* lg = std::get_if<LinearGaussian>(&eq.family); lg && !(lg->noise_std >= 0.0)) {
            add(errors, ErrorCode::InvalidEquation, "negative noise_std for '" + eq.child + "'");
        }
        if (auto* tbl = std::get_if<DeterministicTable>(&eq.family); tbl && parents_ok) {
            check_table(model, eq, *tbl, errors);
        }
        if (std::holds_alternative<BernoulliLogit>(eq.family)) {
            const Domain& d = model.variables[child].domain;
            if (d.finite() && !(d.contains(0.0) && d.contains(1.0))) {
                add(errors, ErrorCode::DomainViolation, "bernoulli child '" + eq.child + "' needs domain {0, 1}");
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = model.variables[i];
        const bool has_prior = model.priors.count(v.name) > 0;
        if (v.role == Role::Background) {
            if (!has_prior) {
                add(errors, ErrorCode::InvalidPrior, "background variable '" + v.name + "' has no prior");
                continue;
            }
            const Prior& prior = model.priors.at(v.name);
            if (auto* np = std::get_if<NormalPrior>(&prior)) {
                if (!(np->std >= 0.0) || !std::isfinite(np->mean)) {
                    add(errors, ErrorCode::InvalidPrior, "invalid normal prior for '" + v.name + "'");
                }
            } else {
                const auto& cp = std::get<CategoricalPrior>(prior);
                double total = 0.0;
                bool bad = cp.values.empty() || cp.values.size() != cp.probs.size();
                for (double p : cp.probs) {
                    bad = bad || !(p >= 0.0);
                    total += p;
                }
                if (bad || std::abs(total - 1.0) > 1e-12) {
                    add(errors, ErrorCode::InvalidPrior,
                        "categorical prior for '" + v.name + "' must have matching values/probs summing to 1");
                }
                for (double val : cp.values) {
                    if (v.domain.finite() && !v.domain.contains(val)) {
                        add(errors, ErrorCode::DomainViolation,
                            "prior value outside domain of '" + v.name + "'");
                    }
                }
            }
        } else {
            if (has_prior) add(errors, ErrorCode::InvalidPrior, "non-background '" + v.name + "' has a prior");
            if (equation_count[i] == 0) {
                add(errors, ErrorCode::MissingEquation, "no equation for '" + v.name + "'");
            }
        }
    }
    for (const auto& [name, prior] : model.priors) {
        if (!index.count(name)) add(errors, ErrorCode::UnknownVariable, "prior for unknown variable '" + name + "'");
    }

    // Kahn's algorithm, backgrounds first, ties broken by declaration order.
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> children(n);
    for (std::size_t c = 0; c < n; ++c) {
        for (auto p : parents[c]) {
            children[p].push_back(c);
            ++indegree[c];
        }
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i) {
        if (model.variables[i].role == Role::Background && indegree[i] == 0) order.push_back(i);
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (model.variables[i].role != Role::Background && indegree[i] == 0) ready.push(i);
    }
    for (std::size_t b : order) {
        for (auto c : children[b]) {
            if (--indegree[c] == 0) ready.push(c);
        }
    }
    while (!ready.empty()) {
        const std::size_t v = ready.top();
        ready.pop();
        order.push_back(v);
        for (auto c : children[v]) {
            if (--indegree[c] == 0) ready.push(c);
        }
    }
    if (order.size() != n) {
        std::string members;
        for (std::size_t i = 0; i < n; ++i) {
            if (indegree[i] > 0) members += (members.empty() ? "" : ", ") + model.variables[i].name;
        }
        add(errors, ErrorCode::CycleDetected, "cycle among {" + members + "}");
    }
    if (errors.empty()) {
        for (auto i : order) result.topological_order.push_back(model.variables[i].name);
    }
    return result;
}

void require_valid(const CausalModel& model) {
    auto result = validate_model(model);
    if (!result.ok()) throw Error(result.errors.front().code, result.errors.front().message);
}

// ---------------------------------------------------------------------------

double poisson_log_pmf(double k, double rate) {
    if (k < 0 || std::floor(k) != k) return -std::numeric_limits<double>::infinity();
    if (rate <= 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return k * std::log(rate) - rate - std::lgamma(k + 1.0);
}

double poisson_quantile(double rate, double u) {
    if (!(rate > 0.0)) return 0.0;
    // Start where the lower tail is negligible, then accumulate in log space.
    const double start = std::max(0.0, std::floor(rate - 12.0 * std::sqrt(rate) - 10.0));
    double k = start;
    double cdf = 0.0;
    double log_p = poisson_log_pmf(k, rate);
    while (true) {
        cdf += std::exp(log_p);
        if (cdf >= u) return k;
        k += 1.0;
        log_p += std::log(rate) - std::log(k);
        if (k > rate + 40.0 * std::sqrt(rate) + 100.0) return k;
    }
}

NoiseKind CompiledNode::noise_kind() const {
    switch (kind) {
        case NodeKind::NormalBackground: return NoiseKind::Normal;
        case NodeKind::CategoricalBackground: return NoiseKind::Uniform;
        case NodeKind::LinearGaussian: return sigma > 0.0 ? NoiseKind::Normal : NoiseKind::None;
        case NodeKind::Poisson: return NoiseKind::Uniform;
        case NodeKind::Bernoulli: return NoiseKind::Uniform;
        case NodeKind::Table: return NoiseKind::None;
    }
    return NoiseKind::None;
}

double CompiledNode::linear_predictor(std::span<const double> values) const {
    double eta = intercept;
    for (std::size_t j = 0; j < parents.size(); ++j) eta += weights[j] * values[parents[j]];
    return eta;
}

double CompiledNode::table_lookup(std::span<const double> values) const {
    std::size_t flat = 0;
    for (std::size_t j = 0; j < parents.size(); ++j) {
        const auto& dom = parent_domains[j];
        const double v = values[parents[j]];
        std::size_t pos = 0;
        while (pos < dom.size() && dom[pos] != v) ++pos;
        if (pos == dom.size()) return std::numeric_limits<double>::quiet_NaN();
        flat += pos * strides[j];
    }
    return table[flat];
}

double CompiledNode::value_from_noise(std::span<const double> values, double noise) const {
    switch (kind) {
        case NodeKind::NormalBackground: return prior_mean + prior_std * noise;
        case NodeKind::CategoricalBackground: {
            for (std::size_t i = 0; i < cat_cdf.size(); ++i) {
                if (noise <= cat_cdf[i]) return cat_values[i];
            }
            return cat_values.back();
        }
        case NodeKind::LinearGaussian: return linear_predictor(values) + sigma * noise;
        case NodeKind::Poisson: return poisson_quantile(std::exp(linear_predictor(values)), noise);
        case NodeKind::Bernoulli: {
            const double p = 1.0 / (1.0 + std::exp(-linear_predictor(values)));
            return noise < 1.0 - p ? 0.0 : 1.0;
        }
        case NodeKind::Table: return table_lookup(values);
    }
    return 0.0;
}

double CompiledNode::log_likelihood(std::span<const double> values, double observed) const {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    switch (kind) {
        case NodeKind::LinearGaussian: {
            const double mean = linear_predictor(values);
            if (sigma == 0.0) return std::abs(observed - mean) <= 1e-9 * (1.0 + std::abs(observed)) ? 0.0 : kNegInf;
            const double z = (observed - mean) / sigma;
            return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
        }
        case NodeKind::Poisson: return poisson_log_pmf(observed, std::exp(linear_predictor(values)));
        case NodeKind::Bernoulli: {
            const double eta = linear_predictor(values);
            // log sigmoid computed stably
            auto log_sigmoid = [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); };
            if (observed == 1.0) return log_sigmoid(eta);
            if (observed == 0.0) return log_sigmoid(-eta);
            return kNegInf;
        }
        case NodeKind::Table: return table_lookup(values) == observed ? 0.0 : kNegInf;
        default: return 0.0;
    }
}

CompiledModel::CompiledModel(const CausalModel& model) : model_(model) {
    auto result = validate_model(model_);
    if (!result.ok()) throw Error(result.errors.front().code, result.errors.front().message);
    const std::size_t n = model_.variables.size();
    nodes_.resize(n);
    children_.assign(n, {});
    for (const auto& name : result.topological_order) order_.push_back(*model_.index_of(name));

    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = model_.variables[i];
        CompiledNode& node = nodes_[i];
        node.var = i;
        if (v.role == Role::Background) {
            node.noise_hash = name_hash(v.name);
            const Prior& prior = model_.priors.at(v.name);
            if (auto* np = std::get_if<NormalPrior>(&prior)) {
                node.kind = NodeKind::NormalBackground;
                node.prior_mean = np->mean;
                node.prior_std = np->std;
            } else {
                const auto& cp = std::get<CategoricalPrior>(prior);
                node.kind = NodeKind::CategoricalBackground;
                node.cat_values = cp.values;
                node.cat_probs = cp.probs;
                double acc = 0.0;
                for (double p : cp.probs) node.cat_cdf.push_back(acc += p);
                node.cat_cdf.back() = 1.0;
            }
            continue;
        }
        const StructuralEquation& eq = *model_.equation_for(v.name);
        node.noise_hash = name_hash(eq.noise_key());
        for (const auto& p : eq.parents) {
            node.parents.push_back(*model_.index_of(p));
            children_[node.parents.back()].push_back(i);
        }
        std::visit(
            [&](const auto& fam) {
                using T = std::decay_t<decltype(fam)>;
                if constexpr (std::is_same_v<T, LinearGaussian>) {
                    node.kind = NodeKind::LinearGaussian;
                    node.intercept = fam.intercept;
                    node.weights = fam.weights;
                    node.sigma = fam.noise_std;
                } else if constexpr (std::is_same_v<T, PoissonLogLink>) {
                    node.kind = NodeKind::Poisson;
                    node.intercept = fam.intercept;
                    node.weights = fam.weights;
                } else if constexpr (std::is_same_v<T, BernoulliLogit>) {
                    node.kind = NodeKind::Bernoulli;
                    node.intercept = fam.intercept;
                    node.weights = fam.weights;
                } else {
                    node.kind = NodeKind::Table;
                    std::size_t total = 1;
                    for (const auto& p : eq.parents) {
                        node.parent_domains.push_back(model_.variable(p).domain.values);
                    }
                    node.strides.resize(eq.parents.size());
                    for (std::size_t j = 0; j < eq.parents.size(); ++j) {
                        node.strides[j] = total;
                        total *= node.parent_domains[j].size();
                    }
                    node.table.assign(total, std::numeric_limits<double>::quiet_NaN());
                    for (const auto& [key, value] : fam.entries) {
                        std::size_t flat = 0;
                        bool ok = true;
                        for (std::size_t j = 0; j < key.size(); ++j) {
                            const auto& dom = node.parent_domains[j];
                            auto it = std::find(dom.begin(), dom.end(), key[j]);
                            if (it == dom.end()) {
                                ok = false;
                                break;
                            }
                            flat += static_cast<std::size_t>(it - dom.begin()) * node.strides[j];
                        }
                        if (ok) node.table[flat] = value;
                    }
                }
            },
            eq.family);
    }
}

std::size_t CompiledModel::index(const VariableId& name) const {
    auto idx = model_.index_of(name);
    if (!idx) throw Error(ErrorCode::UnknownVariable, "no variable named '" + name + "'");
    return *idx;
}

std::vector<char> CompiledModel::descendant_mask(const std::vector<std::size_t>& sources) const {
    std::vector<char> mask(size(), 0);
    std::vector<std::size_t> stack(sources.begin(), sources.end());
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        if (mask[v]) continue;
        mask[v] = 1;
        for (auto c : children_[v]) stack.push_back(c);
    }
    return mask;
}

std::vector<char> CompiledModel::ancestor_mask(const std::vector<std::size_t>& targets) const {
    std::vector<char> mask(size(), 0);
    std::vector<std::size_t> stack(targets.begin(), targets.end());
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        if (mask[v]) continue;
        mask[v] = 1;
        for (auto p : nodes_[v].parents) stack.push_back(p);
    }
    return mask;
}

// ---------------------------------------------------------------------------

Dataset ancestral_sample(const CausalModel& model, std::size_t n, std::uint64_t seed) {
    const CompiledModel compiled(model);
    const std::size_t width = compiled.size();
    std::vector<double> buffer(n * width);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t row = begin; row < end; ++row) {
            std::span<double> values(buffer.data() + row * width, width);
            compiled.forward(values, KeyedNoise{seed, row, 0});
        }
    });
    Dataset out;
    for (auto var : compiled.order()) {
        std::vector<double> col(n);
        for (std::size_t row = 0; row < n; ++row) col[row] = buffer[row * width + var];
        out.columns.push_back(compiled.name(var));
        out.data.push_back(std::move(col));
    }
    return out;
}

CausalModel intervene(const CausalModel& model, const std::map<VariableId, double>& assignments) {
    CausalModel out = model;
    for (const auto& [name, value] : assignments) {
        const auto idx = model.index_of(name);
        if (!idx) throw Error(ErrorCode::UnknownVariable, "cannot intervene on unknown '" + name + "'");
        const Variable& v = model.variables[*idx];
        if (v.role == Role::Background) {
            throw Error(ErrorCode::InterveneOnBackground, "cannot intervene on background '" + name + "'");
        }
        if (!v.domain.contains(value)) {
            throw Error(ErrorCode::DomainViolation, "value outside domain of '" + name + "'");
        }
        StructuralEquation* eq = out.equation_for(name);
        if (!eq) throw Error(ErrorCode::MissingEquation, "no equation for '" + name + "'");
        const VariableId noise = eq->noise_source;
        *eq = StructuralEquation{name, {}, LinearGaussian{value, {}, 0.0}, noise};
    }
    require_valid(out);
    return out;
}

std::set<VariableId> descendants(const CausalModel& model, const std::set<VariableId>& of) {
    for (const auto& name : of) {
        if (!model.has(name)) throw Error(ErrorCode::UnknownVariable, "unknown variable '" + name + "'");
    }
    std::map<VariableId, std::vector<VariableId>> children;
    for (const auto& eq : model.equations) {
        for (const auto& p : eq.parents) children[p].push_back(eq.child);
    }
    std::set<VariableId> out;
    std::vector<VariableId> stack(of.begin(), of.end());
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        if (!out.insert(v).second) continue;
        for (const auto& c : children[v]) stack.push_back(c);
    }
    return out;
}

std::set<VariableId> non_descendants(const CausalModel& model, const std::set<VariableId>& of) {
    const auto desc = descendants(model, of);
    std::set<VariableId> out;
    for (const auto& v : model.variables) {
        if (!desc.count(v.name)) out.insert(v.name);
    }
    return out;
}

CausalModel twin_network(const CausalModel& model, const std::map<VariableId, double>& factual,
                         const std::map<VariableId, double>& counterfactual) {
    std::set<VariableId> targets;
    for (const auto& [name, value] : factual) targets.insert(name);
    for (const auto& [name, value] : counterfactual) {
        if (!targets.count(name)) {
            throw Error(ErrorCode::UnknownVariable, "factual and counterfactual maps differ on '" + name + "'");
        }
    }
    if (targets.size() != counterfactual.size()) {
        throw Error(ErrorCode::UnknownVariable, "factual and counterfactual maps assign different variables");
    }
    for (const auto& name : targets) {
        const Variable& v = model.variable(name);
        if (v.role == Role::Background) {
            throw Error(ErrorCode::InterveneOnBackground, "cannot intervene on background '" + name + "'");
        }
    }
    const auto desc = descendants(model, targets);
    auto renamed = [&](const VariableId& name, std::string_view suffix) {
        return desc.count(name) ? name + std::string(suffix) : name;
    };

    CausalModel twin;
    for (const auto& v : model.variables) {
        if (!desc.count(v.name)) {
            twin.variables.push_back(v);
            continue;
        }
        for (auto suffix : {kFactualSuffix, kCounterfactualSuffix}) {
            Variable copy = v;
            copy.name = v.name + std::string(suffix);
            twin.variables.push_back(copy);
        }
    }
    for (const auto& eq : model.equations) {
        if (!desc.count(eq.child)) {
            twin.equations.push_back(eq);
            continue;
        }
        for (auto suffix : {kFactualSuffix, kCounterfactualSuffix}) {
            StructuralEquation copy;
            copy.child = eq.child + std::string(suffix);
            copy.noise_source = eq.noise_key();
            if (targets.count(eq.child)) {
                const double value = suffix == kFactualSuffix ? factual.at(eq.child) : counterfactual.at(eq.child);
                copy.family = LinearGaussian{value, {}, 0.0};
            } else {
                copy.family = eq.family;
                for (const auto& p : eq.parents) copy.parents.push_back(renamed(p, suffix));
            }
            twin.equations.push_back(std::move(copy));
        }
    }
    twin.priors = model.priors;
    require_valid(twin);
    return twin;
}

std::map<VariableId, double> evaluate_world(const CausalModel& model,
                                            const std::map<VariableId, double>& backgrounds,
                                            std::uint64_t seed) {
    const CompiledModel compiled(model);
    std::vector<double> values(compiled.size(), 0.0);
    std::vector<char> fixed(compiled.size(), 0);
    for (const auto& [name, value] : backgrounds) {
        const std::size_t idx = compiled.index(name);
        if (compiled.role(idx) != Role::Background) {
            throw Error(ErrorCode::InvalidModel, "'" + name + "' is not a background variable");
        }
        values[idx] = value;
        fixed[idx] = 1;
    }
    compiled.forward(std::span<double>(values), KeyedNoise{seed, 0, 0}, &fixed);
    std::map<VariableId, double> out;
    for (std::size_t i = 0; i < values.size(); ++i) out[compiled.name(i)] = values[i];
    return out;
}

}  // namespace cfair
