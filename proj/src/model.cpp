#include "cfair/model.hpp"

#include <algorithm>
#include <cmath>

#include "cfair/error.hpp"

namespace cfair {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::Protected: return "protected";
        case Role::Observed: return "observed";
        case Role::Outcome: return "outcome";
        case Role::Background: return "background";
    }
    return "observed";
}

Role role_from_string(std::string_view text) {
    if (text == "protected") return Role::Protected;
    if (text == "observed") return Role::Observed;
    if (text == "outcome") return Role::Outcome;
    if (text == "background") return Role::Background;
    throw Error(ErrorCode::Parse, "unknown role '" + std::string(text) + "'");
}

bool Domain::contains(double v) const {
    if (!finite()) return std::isfinite(v);
    return std::any_of(values.begin(), values.end(), [v](double d) { return d == v; });
}

std::string_view family_name(const Family& family) {
    struct Visitor {
        std::string_view operator()(const LinearGaussian&) const { return "linear_gaussian"; }
        std::string_view operator()(const PoissonLogLink&) const { return "poisson_log"; }
        std::string_view operator()(const BernoulliLogit&) const { return "bernoulli_logit"; }
        std::string_view operator()(const DeterministicTable&) const { return "table"; }
    };
    return std::visit(Visitor{}, family);
}

std::optional<std::size_t> CausalModel::index_of(const VariableId& name) const {
    for (std::size_t i = 0; i < variables.size(); ++i) {
        if (variables[i].name == name) return i;
    }
    return std::nullopt;
}

const Variable& CausalModel::variable(const VariableId& name) const {
    auto idx = index_of(name);
    if (!idx) throw Error(ErrorCode::UnknownVariable, "no variable named '" + name + "'");
    return variables[*idx];
}

const StructuralEquation* CausalModel::equation_for(const VariableId& name) const {
    for (const auto& eq : equations) {
        if (eq.child == name) return &eq;
    }
    return nullptr;
}

StructuralEquation* CausalModel::equation_for(const VariableId& name) {
    for (auto& eq : equations) {
        if (eq.child == name) return &eq;
    }
    return nullptr;
}

std::vector<VariableId> CausalModel::names_with_role(Role role) const {
    std::vector<VariableId> out;
    for (const auto& v : variables) {
        if (v.role == role) out.push_back(v.name);
    }
    return out;
}

std::optional<std::size_t> Dataset::column_index(const VariableId& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    return std::nullopt;
}

const std::vector<double>& Dataset::column(const VariableId& name) const {
    auto idx = column_index(name);
    if (!idx) throw Error(ErrorCode::UnknownVariable, "dataset has no column '" + name + "'");
    return data[*idx];
}

void Dataset::add_column(VariableId name, std::vector<double> values) {
    if (!data.empty() && values.size() != rows()) {
        throw Error(ErrorCode::DimensionMismatch, "column '" + name + "' has wrong length");
    }
    if (column_index(name)) throw Error(ErrorCode::DuplicateVariable, "column '" + name + "' exists");
    columns.push_back(std::move(name));
    data.push_back(std::move(values));
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.columns = columns;
    out.data.resize(data.size());
    for (std::size_t c = 0; c < data.size(); ++c) {
        out.data[c].reserve(rows.size());
        for (auto r : rows) out.data[c].push_back(data[c][r]);
    }
    return out;
}

}  // namespace cfair
