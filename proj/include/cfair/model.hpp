#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cfair {

using VariableId = std::string;

enum class Role { Protected, Observed, Outcome, Background };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

/// Continuous unless `values` is non-empty.
struct Domain {
    std::vector<double> values;

    bool finite() const { return !values.empty(); }
    bool contains(double v) const;
    static Domain real() { return {}; }
    static Domain of(std::vector<double> values) { return Domain{std::move(values)}; }
};

struct LinearGaussian {
    double intercept = 0.0;
    std::vector<double> weights;
    double noise_std = 0.0;
};

struct PoissonLogLink {
    double intercept = 0.0;
    std::vector<double> weights;
};

struct BernoulliLogit {
    double intercept = 0.0;
    std::vector<double> weights;
};

/// Finite map from parent-value tuples (in parent order) to the child value.
struct DeterministicTable {
    std::map<std::vector<double>, double> entries;
};

using Family = std::variant<LinearGaussian, PoissonLogLink, BernoulliLogit, DeterministicTable>;

std::string_view family_name(const Family& family);

struct StructuralEquation {
    VariableId child;
    std::vector<VariableId> parents;
    Family family;
    /// Name keying this equation's exogenous noise stream. Empty means the
    /// child's own name; twin copies point at the original so both worlds
    /// share one noise draw.
    VariableId noise_source;

    const VariableId& noise_key() const { return noise_source.empty() ? child : noise_source; }
};

struct NormalPrior {
    double mean = 0.0;
    double std = 1.0;
};

struct CategoricalPrior {
    std::vector<double> values;
    std::vector<double> probs;
};

using Prior = std::variant<NormalPrior, CategoricalPrior>;

struct Variable {
    VariableId name;
    Role role = Role::Observed;
    Domain domain;
};

/// The triple (U, V, F): variables with roles, one equation per non-background
/// variable, one prior per background variable.
struct CausalModel {
    std::vector<Variable> variables;
    std::vector<StructuralEquation> equations;
    std::map<VariableId, Prior> priors;

    std::optional<std::size_t> index_of(const VariableId& name) const;
    const Variable& variable(const VariableId& name) const;
    const StructuralEquation* equation_for(const VariableId& name) const;
    StructuralEquation* equation_for(const VariableId& name);
    std::vector<VariableId> names_with_role(Role role) const;
    bool has(const VariableId& name) const { return index_of(name).has_value(); }
};

/// Column-major table of realized values. Categorical values are stored as
/// their numeric codes.
struct Dataset {
    std::vector<VariableId> columns;
    std::vector<std::vector<double>> data;

    std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
    std::optional<std::size_t> column_index(const VariableId& name) const;
    const std::vector<double>& column(const VariableId& name) const;
    void add_column(VariableId name, std::vector<double> values);
    Dataset select_rows(const std::vector<std::size_t>& rows) const;
};

}  // namespace cfair
