#pragma once

// JSON report records for fitted and reconstructed quantities. Every record
// that a later pipeline stage consumes has a matching reader.

#include "json.hpp"
#include "photonchain/characterization.hpp"
#include "photonchain/fock.hpp"
#include "photonchain/temporal_mode.hpp"
#include "photonchain/tomography.hpp"

namespace photonchain::records {

using nlohmann::json;

json density_matrix(const fock::DiagonalDensityMatrix& rho);
fock::DiagonalDensityMatrix density_matrix_from(const json& j);

json bounded(const tomography::BoundedValue& v);

json reconstruction(const tomography::ReconstructionResult& r);
tomography::ReconstructionResult reconstruction_from(const json& j);

json mode_params(const temporal::TemporalModeParams& p);
temporal::TemporalModeParams mode_params_from(const json& j);

json backaction_model(const characterization::BackactionModel& m);
characterization::BackactionModel backaction_model_from(const json& j);

json added_noise_model(const characterization::AddedNoiseModel& m);
characterization::AddedNoiseModel added_noise_model_from(const json& j);

json comparison(const characterization::ComparisonReport& c);

}  // namespace photonchain::records
