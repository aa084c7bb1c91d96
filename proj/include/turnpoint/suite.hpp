#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "turnpoint/worldgen.hpp"

namespace turnpoint {

/// Per-category record counts of the reference dual-event suite.
const std::map<Category, int>& table1_counts();

/// Deterministic synthetic suite with the reference category counts
/// (350 records). Category semantics:
///   General        directions differ by at least 90 degrees; all else shared
///   MotionOrder    second direction is the first turned by 90 degrees
///   HumanIdentity  identity changes; direction, speed and background shared
///   ComplexPlot    direction, identity and background all change
///   EgoExo         50 event pairs, each emitted as a first- and third-view record
std::vector<PromptRecord> generate_suite(std::uint64_t seed, int feature_dim = 2);

struct Violation {
  std::string record_id;  // empty for suite-level findings
  std::string message;
};

using ValidationReport = std::vector<Violation>;

/// Schema, invariant and pairing checks; `strict_table1` additionally
/// requires the reference per-category counts.
ValidationReport validate_suite(const std::vector<PromptRecord>& records, bool strict_table1 = false);

/// Reads a suite file and validates it. Malformed lines become violations;
/// an unreadable file throws InputError.
ValidationReport validate_suite_file(const std::filesystem::path& path, bool strict_table1 = false);

nlohmann::json to_json(const EventParams& e);
nlohmann::json to_json(const PromptRecord& rec);

/// Throws InputError naming the offending field.
PromptRecord record_from_json(const nlohmann::json& j);
EventParams event_from_json(const nlohmann::json& j);

/// One JSON object per line, UTF-8.
void write_suite(const std::filesystem::path& path, const std::vector<PromptRecord>& records);
std::vector<PromptRecord> read_suite(const std::filesystem::path& path);

const PromptRecord& find_record(const std::vector<PromptRecord>& records, const std::string& id);

/// Smallest angle between the two events' directions, in [0, pi].
double event_angle(const PromptRecord& rec);

}  // namespace turnpoint
