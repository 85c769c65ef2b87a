#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "exitperron/perron.hpp"
#include "exitperron/scheme.hpp"
#include "exitperron/sim.hpp"

namespace exitperron {

inline constexpr int kReportSchemaVersion = 1;

/// Envelope every report shares: schema version, problem hash, seed and
/// a full echo of the run parameters — re-running the same config must
/// reproduce the bytes.
nlohmann::json report_envelope(const std::string& kind, const ControlProblem& p, uint64_t seed,
                               nlohmann::json params);

nlohmann::json to_json(const ValueEstimate& est);
nlohmann::json to_json(const MartingaleReport& rep);
nlohmann::json to_json(const SandwichReport& rep);
nlohmann::json to_json(const DPPReport& rep);
nlohmann::json to_json(const ViscosityReport& rep);
nlohmann::json to_json(const SolveStats& stats);
nlohmann::json to_json(const AssumptionReport& rep);

void write_text_file(const std::string& path, const std::string& content);
void write_json_file(const std::string& path, const nlohmann::json& j);

/// CSV: node coordinates…, value, node_class.
std::string field_csv(const ValueField& field);
void write_field_csv(const std::string& path, const ValueField& field);

/// Inverse of field_csv against a known grid; the boundary-consistent
/// flag is re-derived from g.
ValueField read_field_csv(const std::string& path, std::shared_ptr<const Grid> grid,
                          const ControlProblem& p);

/// CSV: node coordinates…, action components.
std::string policy_csv(const PolicyField& policy);
void write_policy_csv(const std::string& path, const PolicyField& policy);

/// CSV: h, diff_sup.
std::string refine_csv(const RefineTable& table);
void write_refine_csv(const std::string& path, const RefineTable& table);

/// CSV: path_id, t0, exit_time, censored, discounted_running,
/// terminal_payoff (discounted; 0 for censored paths).
std::string batch_csv(const ControlProblem& p, const TrajectoryBatch& batch);
void write_batch_csv(const std::string& path, const ControlProblem& p,
                     const TrajectoryBatch& batch);

/// gnuplot script plotting value.csv (and oracle.csv when present).
std::string gnuplot_script(int dim);

}  // namespace exitperron
