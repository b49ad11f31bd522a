#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfair/counterfactual.hpp"
#include "cfair/model.hpp"

namespace cfair {

/// How one input column enters a design matrix. Finite-domain columns are
/// one-hot encoded over `levels` minus the first (smallest) level.
struct ColumnCoding {
    VariableId name;
    std::vector<double> levels;  // empty: numeric column used as is

    std::size_t width() const { return levels.empty() ? 1 : levels.size() - 1; }
};

struct Encoding {
    bool intercept = true;
    std::vector<ColumnCoding> columns;

    std::size_t width() const;
    std::vector<std::string> labels() const;
    /// `values` aligned with `columns`; writes width() entries.
    void encode(std::span<const double> values, std::span<double> out) const;

    nlohmann::json to_json() const;
    static Encoding from_json(const nlohmann::json& doc);
};

/// Finite domains come from `model` when given; other columns are numeric.
Encoding make_encoding(const std::vector<VariableId>& columns, const CausalModel* model, bool intercept = true);

struct DesignMatrix {
    Eigen::MatrixXd X;
    std::vector<std::string> labels;
};

DesignMatrix design_matrix(const Dataset& data, const Encoding& encoding);

struct LinearFit {
    Eigen::VectorXd weights;
    double residual_std = 0.0;
    std::vector<std::string> labels;
    bool separation_warning = false;
    std::size_t iterations = 0;
    std::vector<double> loss_trace;
};

inline constexpr double kRidge = 1e-8;

LinearFit ols_fit(const DesignMatrix& X, const Eigen::VectorXd& y);
LinearFit logistic_fit(const DesignMatrix& X, const Eigen::VectorXd& y);

/// Per-target OLS on the regressors (finite domains one-hot encoded via
/// `model` when given).
struct Level3Fit {
    Encoding encoding;
    std::map<VariableId, LinearFit> fits;
    Dataset residuals;  // one column `eps_<target>` per target
};

Level3Fit level3_fit(const Dataset& data, const std::vector<VariableId>& targets,
                     const std::vector<VariableId>& regressors, const CausalModel* model = nullptr);
Dataset level3_residuals(const Dataset& data, const std::vector<VariableId>& targets,
                         const std::vector<VariableId>& regressors, const CausalModel* model = nullptr);

struct LatentFitOptions {
    std::size_t iterations = 50;
    std::size_t inner_steps = 20;
    std::size_t inner_kept = 10;
};

struct LatentModelFit {
    CausalModel model;           // spec with estimated parameters
    VariableId latent;           // name of K
    Eigen::MatrixXd draws;       // records x draws of K under the final model
    std::vector<VariableId> evidence;
    double mean_acceptance = 0.0;
    std::vector<double> loglik_trace;  // complete-data log-likelihood per iteration

    nlohmann::json meta() const;
};

/// Monte Carlo EM for a single-latent template: K ~ N(0,1) and every child of
/// K is linear-Gaussian, Poisson or Bernoulli with its remaining parents
/// observed. Children of K present in `data` are used as evidence.
LatentModelFit fit_level2_latent(const Dataset& data, const CausalModel& spec, const McmcConfig& config,
                                 const LatentFitOptions& options = {});

/// Per-record K sampling under a fixed single-latent model, by the same
/// sampler the fit uses. Evidence is restricted to `evidence` columns.
Eigen::MatrixXd sample_single_latent(const CausalModel& model, const Dataset& data,
                                     const std::vector<VariableId>& evidence, const McmcConfig& config,
                                     double* mean_acceptance = nullptr);

/// Average per-record marginal log-likelihood of the observed children,
/// integrating the single latent by dense quadrature.
double single_latent_loglik(const CausalModel& model, const Dataset& data, const std::vector<VariableId>& evidence);

}  // namespace cfair
