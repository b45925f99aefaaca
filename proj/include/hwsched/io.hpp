#pragma once

#include "hwsched/ctmc.hpp"
#include "hwsched/det_system.hpp"
#include "hwsched/diffusion.hpp"
#include "hwsched/grid.hpp"
#include "hwsched/model.hpp"
#include "hwsched/path_calculus.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace hwsched {

/// Model file:
///   {"classes":  [{"theta", "ell", "r", "lambda", "x_star"}, ...],
///    "stations": [{"nu"}, ...],
///    "edges":    [{"class", "station", "mu", "psi_star"}, ...],
///    "gamma": g,
///    "cost": {"queue_weights", "idle_weights", "queue_exponent", "idle_exponent",
///             "norm_weight", "norm_exponent", "constant"}}      (cost optional)
/// Indices are 0-based. Missing class fields default to theta = ell = 0, r = 1;
/// missing cost fields default to zero weights, exponents 1.
struct ModelFile {
    TreeModel model;
    std::optional<RunningCostSpec> cost;
};

/// Throws InputError with the offending field on malformed input. Does not validate the tree.
ModelFile parse_model(std::string_view json_text);
ModelFile load_model(const std::filesystem::path& path);
std::string model_to_json(const TreeModel& model, const RunningCostSpec* cost = nullptr);

/// FNV-1a 64 of the canonical model JSON (cost excluded), as 16 hex digits.
std::string model_hash(const TreeModel& model);

std::string sequences_to_json(const OperatorSequences& seqs);

/// Field files: `<stem>.json` header plus `<stem>.bin` payload of little-endian
/// float64 in row-major order (first axis slowest). Value payloads hold one
/// number per point; policy payloads hold u (I numbers) then v (J numbers) per point.
void save_value_field(const std::filesystem::path& stem, const ValueField& field, const TreeModel& model);
void save_policy_field(const std::filesystem::path& stem, const PolicyField& field, const TreeModel& model);

struct LoadedValue {
    ValueField field;
    std::string model_hash;
};
struct LoadedPolicy {
    PolicyField field;
    std::string model_hash;
};

/// `header` is the .json file; the payload is resolved next to it.
LoadedValue load_value_field(const std::filesystem::path& header);
LoadedPolicy load_policy_field(const std::filesystem::path& header);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Columns t, x_0.., y_0.., z_0..
void write_path_csv(std::ostream& os, const SimPath& path);
void write_path_csv(std::ostream& os, const CtmcPath& path);
/// Columns t, w_*, x_*, y_*, z_*, psi_<class>_<station>.
void write_det_csv(std::ostream& os, const DetTrajectory& tr);
void write_moment_csv(std::ostream& os, const MomentCurve& curve);
void write_comparison_csv(std::ostream& os, const std::vector<MomentDiscrepancy>& rows);
void write_counterexample_csv(std::ostream& os, const CounterexampleReport& rep);

}  // namespace hwsched
