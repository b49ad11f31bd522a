#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfair/model.hpp"
#include "cfair/scm.hpp"

namespace cfair {

using Evidence = std::map<VariableId, double>;
using Assignment = std::map<VariableId, double>;

struct McmcConfig {
    std::size_t chains = 2;
    std::size_t burn_in = 500;
    std::size_t kept = 100;
    std::size_t thin = 5;
    double proposal_std = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    /// Posterior draws per record (m in FairLearning).
    std::size_t draws() const { return chains * kept; }
};

/// Posterior draws for one record. `latent` has one column per model variable
/// (declaration order): backgrounds hold their sampled value; a non-background
/// column holds an abducted standard-normal or uniform noise draw for that
/// equation, or NaN when the noise is not constrained by the evidence and is
/// drawn fresh at prediction time.
struct RecordDraws {
    Eigen::MatrixXd latent;
    double acceptance = std::numeric_limits<double>::quiet_NaN();
    bool exact = false;
};

struct PosteriorDraws {
    std::vector<VariableId> variables;  // model declaration order
    std::vector<std::uint64_t> record_ids;
    std::vector<RecordDraws> records;

    /// draws x backgrounds for one record, backgrounds in declaration order.
    Eigen::MatrixXd backgrounds(std::size_t record, const CausalModel& model) const;
};

/// One component of an exact posterior. Categorical backgrounds relevant to the
/// evidence are fixed per component; the continuous latents are jointly normal.
struct GaussianComponent {
    double weight = 1.0;
    std::map<VariableId, double> categorical;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Exact posterior over the latents the evidence constrains. Continuous latents
/// are named by their background variable, or `noise:<var>` for the standard
/// noise of an unobserved linear-Gaussian equation.
struct GaussianPosterior {
    std::vector<VariableId> latent_names;
    std::vector<GaussianComponent> components;
};

GaussianPosterior abduct_exact(const CausalModel& model, const Evidence& evidence);

RecordDraws abduct_mcmc(const CausalModel& model, const Evidence& evidence, const McmcConfig& config,
                        std::uint64_t record_id = 0);

enum class AbductionMethod { Auto, Exact, Mcmc };

/// Compiled abduction plan for a fixed set of evidence variables. Reusable
/// across records that observe the same variables; safe to share across
/// threads.
class Abductor {
public:
    Abductor(std::shared_ptr<const CompiledModel> model, std::vector<VariableId> evidence_vars,
             AbductionMethod method = AbductionMethod::Auto);
    ~Abductor();
    Abductor(Abductor&&) noexcept;
    Abductor& operator=(Abductor&&) noexcept;

    const CompiledModel& model() const { return *model_; }
    bool exact() const;
    const std::vector<std::size_t>& evidence_index() const { return evidence_idx_; }

    /// `values` aligned with the evidence variables given at construction.
    /// `n_draws` = 0 means config.draws().
    RecordDraws sample(std::span<const double> values, const McmcConfig& config, std::uint64_t record_id,
                       std::size_t n_draws = 0) const;
    GaussianPosterior posterior(std::span<const double> values) const;

private:
    struct ExactPlan;
    struct McmcPlan;
    std::shared_ptr<const CompiledModel> model_;
    std::vector<std::size_t> evidence_idx_;
    std::unique_ptr<ExactPlan> exact_;
    std::unique_ptr<McmcPlan> mcmc_;
};

/// Abducts every record of `data` on the given evidence columns, in parallel.
PosteriorDraws abduct_records(const CausalModel& model, const Dataset& data,
                              const std::vector<VariableId>& evidence_vars, const McmcConfig& config,
                              const std::vector<std::size_t>& rows = {},
                              AbductionMethod method = AbductionMethod::Auto);

/// Which variables keep a fixed value in a simulated world: intervened
/// variables, plus evidence variables that do not descend from any
/// intervention (abduction pins them to their observed values).
class WorldPlan {
public:
    WorldPlan(const CompiledModel& model, const std::vector<std::size_t>& evidence_idx, const Assignment& intervention);

    /// Also hold `vars` at the values they take in the unintervened world.
    void hold_factual(const std::vector<std::size_t>& vars);

    /// Evaluates one world. `evidence` aligned with evidence_idx; `factual`
    /// is required only when hold_factual was used.
    void evaluate(std::span<const double> latent, std::span<const double> evidence, const KeyedNoise& noise,
                  std::span<double> out, std::span<const double> factual = {}) const;

    const std::vector<char>& intervened() const { return intervened_mask_; }

private:
    const CompiledModel* model_;
    std::vector<std::size_t> evidence_idx_;
    std::vector<char> intervened_mask_;
    std::vector<double> intervened_value_;
    std::vector<int> evidence_slot_;  // -1 unless pinned to evidence
    std::vector<char> factual_mask_;
};

/// Noise stream for draw `draw` of record `record_id`. Shared by every world
/// built from the same draw so counterfactual branches differ only through
/// the intervention.
KeyedNoise world_noise(const McmcConfig& config, std::uint64_t record_id, std::size_t draw);

/// Abduction, action, prediction for a single record. Rows are draws, columns
/// are all model variables in topological order.
Dataset counterfactual_sample(const CausalModel& model, const Evidence& evidence, const Assignment& intervention,
                              std::size_t n_draws, const McmcConfig& config);

/// Batch-means standard error of the mean of a correlated sample.
double batch_means_se(std::span<const double> samples, std::size_t batches = 20);

}  // namespace cfair
