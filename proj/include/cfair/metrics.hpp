#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfair/counterfactual.hpp"
#include "cfair/fairlearn.hpp"
#include "cfair/model.hpp"

namespace cfair {

/// Two-sample Kolmogorov-Smirnov distance. With `tolerance` > 0, values closer
/// than the tolerance are not distinguished: returns the smallest D such that
/// F_a(t) <= F_b(t + tol) + D and F_b(t) <= F_a(t + tol) + D for all t.
double ks_statistic(std::span<const double> a, std::span<const double> b, double tolerance = 0.0);

struct AuditOptions {
    std::size_t draws_per_record = 1000;
    std::size_t max_records = 200;
    double threshold = 0.05;
    /// Negative selects 1% of the standard deviation of the pooled factual
    /// predictions (at least 1e-9).
    double ks_tolerance = -1.0;
    /// Density samples kept per record and branch.
    std::size_t density_per_record = 50;
};

struct RecordStatistic {
    std::uint64_t record = 0;  // row index in the audited data
    double statistic = 0.0;
    double mean_shift = 0.0;   // mean counterfactual minus mean factual prediction
};

struct FairnessReport {
    std::string criterion;
    VariableId attribute;
    double a = 0.0;
    double a_prime = 0.0;
    std::size_t draws_per_record = 0;
    double tolerance = 0.0;
    std::vector<RecordStatistic> records;
    double aggregate = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::vector<double> factual_density;
    std::vector<double> counterfactual_density;

    double mean_abs_shift() const;
    nlohmann::json to_json() const;
    /// Two numeric columns, factual and counterfactual; row i pairs draws
    /// that share latents and noise.
    std::string density_csv() const;
};

/// Rows of `data` with attribute == a, seeded uniform subsample of at most
/// `max_records`, in ascending order.
std::vector<std::size_t> audit_rows(const Dataset& data, const VariableId& attribute, double a,
                                    std::size_t max_records, std::uint64_t seed);

FairnessReport cf_fairness_test(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                                const VariableId& attribute, double a, double a_prime, const McmcConfig& config,
                                const AuditOptions& options = {});

/// Fraction of shared draws with |Y_a - Y_a'| > 1e-9; passes iff zero.
FairnessReport strict_cf_check(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                               const VariableId& attribute, double a, double a_prime, const McmcConfig& config,
                               const AuditOptions& options = {});

using Path = std::vector<VariableId>;
using PathSet = std::vector<Path>;

/// Throws InvalidPath unless every path starts at a protected variable and
/// follows model edges.
void validate_paths(const CausalModel& model, const PathSet& paths);

/// Observed and outcome variables that lie on none of the paths.
std::vector<VariableId> off_path_observables(const CausalModel& model, const PathSet& paths);

FairnessReport path_cf_test(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                            const PathSet& unfair_paths, const VariableId& attribute, double a, double a_prime,
                            const McmcConfig& config, const AuditOptions& options = {});

struct GroupGaps {
    double dp_gap = 0.0;
    double eo_gap = 0.0;          // NaN without a binary outcome
    double parity_gap = 0.0;      // predictive parity; NaN unless decisions and outcome are binary
    bool thresholded = false;     // predictions were thresholded at 0.5
};

/// `predictions` aligned with the rows of `data`.
GroupGaps group_gaps(std::span<const double> predictions, const Dataset& data, const VariableId& outcome,
                     const VariableId& attribute, double a, double a_prime, bool threshold);

GroupGaps group_gaps(const FairPredictor& predictor, const CausalModel& model, const Dataset& data,
                     const VariableId& outcome, const VariableId& attribute, double a, double a_prime,
                     const McmcConfig& config);

bool ftu_check(const FairPredictor& predictor, const CausalModel& model);

/// E[Y | do(A=a), X=x] - E[Y | do(A=a'), X=x].
double ace(const FairPredictor& predictor, const CausalModel& model, const Evidence& x, const VariableId& attribute,
           double a, double a_prime, std::size_t n_draws, std::uint64_t seed);

/// E[Y_{A<-a} - Y_{A<-a'} | record] over shared posterior draws.
double counterfactual_difference(const FairPredictor& predictor, const CausalModel& model, const Evidence& record,
                                 const VariableId& attribute, double a, double a_prime, const McmcConfig& config);

/// P(Y_{A<-a'} != y | record, Y = y). Outputs within `band` count as equal.
double prob_sufficiency(const CausalModel& model, const FairPredictor& predictor, const Evidence& record, double y,
                        const VariableId& attribute, double a_prime, const McmcConfig& config, double band = 1e-6);

}  // namespace cfair
