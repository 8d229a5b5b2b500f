#pragma once

#include "hypocert/pipeline.hpp"

#include <json.hpp>

namespace hypocert {

using json = nlohmann::json;

// Non-finite doubles serialise as null.
void to_json(json& j, const ProbeBox& box);
void to_json(json& j, const Witnessed& w);
void to_json(json& j, const BBoundResult& b);
void to_json(json& j, const ConditionFlag& f);
void to_json(json& j, const AssumptionReport& r);
void to_json(json& j, const CertificateInputs& in);
void to_json(json& j, const RateCertificate& c);
void to_json(json& j, const RateCondition& c);
void to_json(json& j, const PhaseBox& b);
void to_json(json& j, const DissipativityResult& r);
void to_json(json& j, const InequalityResult& r);
void to_json(json& j, const SpectralGap& g);
void to_json(json& j, const OperatorStageResult& r);
void to_json(json& j, const RateFit& f);
void to_json(json& j, const DecayCurve& c);
void to_json(json& j, const FokkerPlanckSummary& s);
void to_json(json& j, const OrnsteinUhlenbeckOracle& o);
void to_json(json& j, const Estimate& e);
void to_json(json& j, const NamedEstimate& e);
void to_json(json& j, const CovariationEstimate& e);
void to_json(json& j, const MixingCurve& c);
void to_json(json& j, const SdeStageResult& r);
void to_json(json& j, const ExperimentConfig& c);
void to_json(json& j, const Check& c);
void to_json(json& j, const ReportBundle& r);

}  // namespace hypocert
