#include "turnpoint/suite.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "turnpoint/errors.hpp"
#include "turnpoint/random.hpp"

namespace turnpoint {

using nlohmann::json;

const std::map<Category, int>& table1_counts() {
  static const std::map<Category, int> counts = {{Category::General, 60},
                                                 {Category::MotionOrder, 98},
                                                 {Category::HumanIdentity, 32},
                                                 {Category::ComplexPlot, 60},
                                                 {Category::EgoExo, 100}};
  return counts;
}

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

Eigen::VectorXd unit_vector(Rng& rng, int d) {
  Eigen::VectorXd v;
  do {
    v = rng.normal_vector(d);
  } while (v.norm() < 1e-6);
  return v.normalized();
}

// A unit vector at least 90 degrees away from `from`.
Eigen::VectorXd distinct_unit_vector(Rng& rng, const Eigen::VectorXd& from) {
  Eigen::VectorXd v;
  do {
    v = unit_vector(rng, static_cast<int>(from.size()));
  } while (v.dot(from) > 0.0);
  return v;
}

double distinct_direction(Rng& rng, double theta) { return wrap_angle(theta + rng.uniform(0.5 * M_PI, 1.5 * M_PI)); }

EventParams random_event(Rng& rng, int d) {
  EventParams e;
  e.theta = wrap_angle(rng.uniform(0.0, kTwoPi));
  e.speed = rng.uniform(0.5, 1.5);
  e.identity = unit_vector(rng, d);
  e.background = unit_vector(rng, d);
  return e;
}

std::string describe(const EventParams& e) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "moves at heading %.0f deg, speed %.2f", e.theta * 180.0 / M_PI, e.speed);
  return buf;
}

std::string numbered(const char* prefix, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%03d", prefix, i);
  return buf;
}

PromptRecord make_record(std::string id, Category cat, View view, EventParams e1, EventParams e2) {
  PromptRecord r;
  r.id = std::move(id);
  r.category = cat;
  r.view = view;
  r.text = describe(e1) + " then " + describe(e2);
  r.events = {std::move(e1), std::move(e2)};
  return r;
}

}  // namespace

double event_angle(const PromptRecord& rec) {
  const double diff = std::abs(wrap_angle(rec.event2().theta - rec.event1().theta));
  return diff > M_PI ? kTwoPi - diff : diff;
}

std::vector<PromptRecord> generate_suite(std::uint64_t seed, int feature_dim) {
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  Rng rng(seed);
  const auto& counts = table1_counts();
  std::vector<PromptRecord> out;
  out.reserve(350);

  for (int i = 0; i < counts.at(Category::General); ++i) {
    EventParams e1 = random_event(rng, feature_dim);
    EventParams e2 = e1;
    e2.theta = distinct_direction(rng, e1.theta);
    out.push_back(make_record(numbered("general", i), Category::General, View::third, e1, e2));
  }
  for (int i = 0; i < counts.at(Category::MotionOrder); ++i) {
    EventParams e1 = random_event(rng, feature_dim);
    EventParams e2 = e1;
    e2.theta = wrap_angle(e1.theta + 0.5 * M_PI);
    out.push_back(make_record(numbered("motion-order", i), Category::MotionOrder, View::third, e1, e2));
  }
  for (int i = 0; i < counts.at(Category::HumanIdentity); ++i) {
    EventParams e1 = random_event(rng, feature_dim);
    EventParams e2 = e1;
    e2.identity = distinct_unit_vector(rng, e1.identity);
    out.push_back(make_record(numbered("human-identity", i), Category::HumanIdentity, View::third, e1, e2));
  }
  for (int i = 0; i < counts.at(Category::ComplexPlot); ++i) {
    EventParams e1 = random_event(rng, feature_dim);
    EventParams e2 = e1;
    e2.theta = distinct_direction(rng, e1.theta);
    e2.identity = distinct_unit_vector(rng, e1.identity);
    e2.background = distinct_unit_vector(rng, e1.background);
    out.push_back(make_record(numbered("complex-plot", i), Category::ComplexPlot, View::third, e1, e2));
  }
  for (int i = 0; i < counts.at(Category::EgoExo) / 2; ++i) {
    EventParams e1 = random_event(rng, feature_dim);
    EventParams e2 = e1;
    e2.theta = distinct_direction(rng, e1.theta);
    const std::string pair = numbered("egoexo", i);
    for (View v : {View::first, View::third}) {
      PromptRecord r = make_record(pair + "-" + std::string(to_string(v)), Category::EgoExo, v, e1, e2);
      r.pair_id = pair;
      out.push_back(std::move(r));
    }
  }
  return out;
}

ValidationReport validate_suite(const std::vector<PromptRecord>& records, bool strict_table1) {
  ValidationReport report;
  auto add = [&](const std::string& id, std::string msg) { report.push_back({id, std::move(msg)}); };

  std::set<std::string> seen;
  std::map<std::string, std::vector<const PromptRecord*>> pairs;
  std::map<Category, int> counts;
  Eigen::Index suite_dim = -1;

  for (const auto& r : records) {
    if (r.id.empty()) add(r.id, "id must be non-empty");
    if (!seen.insert(r.id).second) add(r.id, "duplicate id");
    ++counts[r.category];

    if (r.events.size() != 2) {
      add(r.id, "events must have length 2");
    } else {
      for (std::size_t k = 0; k < 2; ++k) {
        const auto& e = r.events[k];
        const std::string which = "event " + std::to_string(k + 1);
        if (!(e.theta >= 0.0 && e.theta < kTwoPi)) add(r.id, which + ": theta must lie in [0, 2*pi)");
        if (!std::isfinite(e.speed) || e.speed < 0.0) add(r.id, which + ": speed must be finite and >= 0");
        if (!e.identity.allFinite() || !e.background.allFinite()) add(r.id, which + ": features must be finite");
        if (e.identity.size() != e.background.size() || e.identity.size() == 0) {
          add(r.id, which + ": identity and background must share a nonzero dimension");
        } else if (suite_dim < 0) {
          suite_dim = e.identity.size();
        } else if (e.identity.size() != suite_dim) {
          add(r.id, which + ": feature dimension differs from the rest of the suite");
        }
      }
    }

    if (r.category == Category::EgoExo) {
      if (!r.pair_id || r.pair_id->empty()) {
        add(r.id, "pairing: EgoExo record has no pair_id");
      } else {
        pairs[*r.pair_id].push_back(&r);
      }
    } else {
      if (r.pair_id) add(r.id, "pair_id is only valid for EgoExo records");
      if (r.view != View::third) add(r.id, "non-EgoExo records use the third-person view");
    }
  }

  for (const auto& [pair, members] : pairs) {
    if (members.size() != 2) {
      for (const auto* m : members) {
        add(m->id, "pairing: pair " + pair + " has " + std::to_string(members.size()) +
                       " record(s), expected one first-view and one third-view record");
      }
      continue;
    }
    if (members[0]->view == members[1]->view) {
      add(members[1]->id, "pairing: pair " + pair + " needs both a first and a third view");
    }
    if (members[0]->events != members[1]->events) {
      add(members[1]->id, "pairing: pair " + pair + " views carry different events");
    }
  }

  if (strict_table1) {
    std::size_t expected_total = 0;
    for (const auto& [cat, n] : table1_counts()) {
      expected_total += static_cast<std::size_t>(n);
      if (counts[cat] != n) {
        add("", "category " + std::string(to_string(cat)) + " has " + std::to_string(counts[cat]) +
                    " records, expected " + std::to_string(n));
      }
    }
    if (records.size() != expected_total) {
      add("", "suite has " + std::to_string(records.size()) + " records, expected " + std::to_string(expected_total));
    }
  }
  return report;
}

json to_json(const EventParams& e) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"theta", e.theta}, {"speed", e.speed}, {"identity", vec(e.identity)}, {"background", vec(e.background)}};
}

json to_json(const PromptRecord& rec) {
  json events = json::array();
  for (const auto& e : rec.events) events.push_back(to_json(e));
  json j = {{"id", rec.id},
            {"category", std::string(to_string(rec.category))},
            {"view", std::string(to_string(rec.view))},
            {"pair_id", rec.pair_id ? json(*rec.pair_id) : json(nullptr)},
            {"events", events}};
  if (rec.text) j["text"] = *rec.text;
  return j;
}

namespace {

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw InputError("record is not a key-value object");
  auto it = j.find(name);
  if (it == j.end()) throw InputError(std::string("missing field '") + name + "'");
  return *it;
}

double number(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number()) throw InputError(std::string("field '") + name + "' must be a number");
  return v.get<double>();
}

Eigen::VectorXd vector_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_array()) throw InputError(std::string("field '") + name + "' must be an array");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw InputError(std::string("field '") + name + "' must hold numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw InputError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

EventParams event_from_json(const json& j) {
  EventParams e;
  e.theta = number(j, "theta");
  e.speed = number(j, "speed");
  e.identity = vector_field(j, "identity");
  e.background = vector_field(j, "background");
  return e;
}

PromptRecord record_from_json(const json& j) {
  PromptRecord r;
  r.id = string_field(j, "id");
  const std::string cat = string_field(j, "category");
  const auto parsed_cat = parse_category(cat);
  if (!parsed_cat) throw InputError("field 'category' has unknown value '" + cat + "'");
  r.category = *parsed_cat;
  const std::string view = string_field(j, "view");
  const auto parsed_view = parse_view(view);
  if (!parsed_view) throw InputError("field 'view' has unknown value '" + view + "'");
  r.view = *parsed_view;
  if (auto it = j.find("pair_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw InputError("field 'pair_id' must be a string or null");
    r.pair_id = it->get<std::string>();
  }
  const json& events = field(j, "events");
  if (!events.is_array()) throw InputError("field 'events' must be an array");
  for (const auto& ej : events) r.events.push_back(event_from_json(ej));
  if (auto it = j.find("text"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw InputError("field 'text' must be a string");
    r.text = it->get<std::string>();
  }
  return r;
}

void write_suite(const std::filesystem::path& path, const std::vector<PromptRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

template <typename OnRecord, typename OnError>
void scan_suite(const std::filesystem::path& path, OnRecord&& on_record, OnError&& on_error) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read suite file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      on_record(record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      on_error(lineno, std::string("malformed JSON: ") + e.what());
    } catch (const InputError& e) {
      on_error(lineno, e.what());
    }
  }
}

}  // namespace

std::vector<PromptRecord> read_suite(const std::filesystem::path& path) {
  std::vector<PromptRecord> records;
  scan_suite(
      path, [&](PromptRecord r) { records.push_back(std::move(r)); },
      [&](int lineno, const std::string& msg) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
      });
  return records;
}

ValidationReport validate_suite_file(const std::filesystem::path& path, bool strict_table1) {
  std::vector<PromptRecord> records;
  ValidationReport parse_errors;
  scan_suite(
      path, [&](PromptRecord r) { records.push_back(std::move(r)); },
      [&](int lineno, const std::string& msg) {
        parse_errors.push_back({"line " + std::to_string(lineno), msg});
      });
  ValidationReport report = validate_suite(records, strict_table1);
  report.insert(report.begin(), parse_errors.begin(), parse_errors.end());
  return report;
}

const PromptRecord& find_record(const std::vector<PromptRecord>& records, const std::string& id) {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw InputError("no prompt record with id '" + id + "'");
}

}  // namespace turnpoint
