#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cfair/error.hpp"
#include "cfair/model.hpp"
#include "cfair/rng.hpp"

namespace cfair {

struct ValidationIssue {
    ErrorCode code;
    std::string message;
};

struct ValidationResult {
    std::vector<VariableId> topological_order;
    std::vector<ValidationIssue> errors;

    bool ok() const { return errors.empty(); }
    bool has(ErrorCode code) const;
};

/// Checks every structural invariant and reports all violations. On success
/// the order lists backgrounds first (declaration order), then every other
/// variable after its parents.
ValidationResult validate_model(const CausalModel& model);

/// Throws the first validation error, if any.
void require_valid(const CausalModel& model);

/// n i.i.d. joint draws; columns in topological order. Each exogenous draw
/// is keyed by (seed, row, noise source) so output is schedule-independent.
Dataset ancestral_sample(const CausalModel& model, std::size_t n, std::uint64_t seed);

/// Replaces each assigned variable's equation with a constant.
CausalModel intervene(const CausalModel& model, const std::map<VariableId, double>& assignments);

/// Variables reachable from `of` by directed paths, including `of` itself.
std::set<VariableId> descendants(const CausalModel& model, const std::set<VariableId>& of);
std::set<VariableId> non_descendants(const CausalModel& model, const std::set<VariableId>& of);

/// Suffixes used for the two worlds of a twin network.
inline constexpr std::string_view kFactualSuffix = "@f";
inline constexpr std::string_view kCounterfactualSuffix = "@f'";

/// One shared copy of every non-descendant of the assigned variables and two
/// copies of every descendant; copies share their original's noise stream.
CausalModel twin_network(const CausalModel& model, const std::map<VariableId, double>& factual,
                         const std::map<VariableId, double>& counterfactual);

/// Evaluates one joint realization. Backgrounds listed in `backgrounds` are
/// fixed; the rest, and all equation noise, are drawn keyed by `seed`.
std::map<VariableId, double> evaluate_world(const CausalModel& model,
                                            const std::map<VariableId, double>& backgrounds,
                                            std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Compiled form used by samplers and auditors.

enum class NodeKind { NormalBackground, CategoricalBackground, LinearGaussian, Poisson, Bernoulli, Table };
enum class NoiseKind { None, Normal, Uniform };

struct CompiledNode {
    std::size_t var = 0;
    NodeKind kind = NodeKind::LinearGaussian;
    std::vector<std::size_t> parents;
    std::vector<double> weights;
    double intercept = 0.0;
    double sigma = 0.0;
    // background priors
    double prior_mean = 0.0;
    double prior_std = 1.0;
    std::vector<double> cat_values;
    std::vector<double> cat_probs;
    std::vector<double> cat_cdf;
    // flattened table over the parents' finite domains; NaN marks a gap
    std::vector<std::vector<double>> parent_domains;
    std::vector<std::size_t> strides;
    std::vector<double> table;
    std::uint64_t noise_hash = 0;

    NoiseKind noise_kind() const;
    double linear_predictor(std::span<const double> values) const;
    /// Value given parent values (already in `values`) and one exogenous draw.
    double value_from_noise(std::span<const double> values, double noise) const;
    /// log p(observed | parents). Deterministic families return 0 or -inf.
    double log_likelihood(std::span<const double> values, double observed) const;
    double table_lookup(std::span<const double> values) const;
};

class CompiledModel {
public:
    explicit CompiledModel(const CausalModel& model);

    const CausalModel& model() const { return model_; }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<std::size_t>& order() const { return order_; }
    const CompiledNode& node(std::size_t var) const { return nodes_[var]; }
    const std::vector<std::vector<std::size_t>>& children() const { return children_; }
    std::size_t index(const VariableId& name) const;
    Role role(std::size_t var) const { return model_.variables[var].role; }
    const VariableId& name(std::size_t var) const { return model_.variables[var].name; }

    /// Mask of variables reachable from `sources` (inclusive).
    std::vector<char> descendant_mask(const std::vector<std::size_t>& sources) const;
    /// Mask of variables with a directed path into `targets` (inclusive).
    std::vector<char> ancestor_mask(const std::vector<std::size_t>& targets) const;

    /// Fills `values` in topological order. Entries with fixed[var] set are
    /// left untouched; `noise(node)` supplies one exogenous draw per node.
    template <class NoiseFn>
    void forward(std::span<double> values, NoiseFn&& noise, const std::vector<char>* fixed = nullptr) const {
        for (std::size_t var : order_) {
            if (fixed && (*fixed)[var]) continue;
            const CompiledNode& n = nodes_[var];
            const NoiseKind kind = n.noise_kind();
            const double draw = kind == NoiseKind::None ? 0.0 : noise(n);
            values[var] = n.value_from_noise(values, draw);
        }
    }

private:
    CausalModel model_;
    std::vector<CompiledNode> nodes_;
    std::vector<std::size_t> order_;
    std::vector<std::vector<std::size_t>> children_;
};

/// Exogenous draws for one world, keyed by (seed, stream, draw, noise source).
/// Two worlds built with the same key share every noise value.
struct KeyedNoise {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t draw = 0;

    double operator()(const CompiledNode& node) const {
        KeyedRng rng(combine_keys(seed, stream), draw, node.noise_hash);
        return node.noise_kind() == NoiseKind::Normal ? rng.normal() : rng.uniform();
    }
};

/// Inverse CDF of Poisson(rate) at u in (0, 1).
double poisson_quantile(double rate, double u);
double poisson_log_pmf(double k, double rate);

}  // namespace cfair
