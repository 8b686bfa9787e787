#include "davt/records_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace davt {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trajectories_csv(std::span<const TrialRecord> records, bool diagnostics) {
  std::string out = diagnostics
                        ? "trial_id,t,log_wealth,stopped,score,growth_estimate,growth_threshold\n"
                        : "trial_id,t,log_wealth,stopped\n";
  for (std::size_t id = 0; id < records.size(); ++id) {
    const TrialRecord& r = records[id];
    for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
      auto [t, lw] = r.trajectory[i];
      bool stopped = r.stopping_time && *r.stopping_time == t;
      out += std::to_string(id);
      out += ',';
      out += std::to_string(t);
      out += ',';
      out += format_double(lw);
      out += ',';
      out += stopped ? '1' : '0';
      if (diagnostics) {
        if (i >= r.diagnostics.size()) {
          throw std::invalid_argument("trajectories_csv: diagnostics shorter than trajectory");
        }
        const DiagnosticPoint& d = r.diagnostics[i];
        out += ',';
        out += format_double(d.score);
        out += ',';
        out += format_double(d.growth_estimate);
        out += ',';
        out += format_double(d.growth_threshold);
      }
      out += '\n';
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw std::invalid_argument("csv: bad numeric field \"" + s + "\"");
  return v;
}

}  // namespace

std::vector<TrialRecord> parse_trajectories_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header");
  bool diagnostics = line.find("score") != std::string::npos;
  std::vector<TrialRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != (diagnostics ? 7u : 4u)) {
      throw std::invalid_argument("csv: wrong field count in \"" + line + "\"");
    }
    std::size_t id = static_cast<std::size_t>(std::stoull(fields[0]));
    while (records.size() <= id) records.emplace_back();
    TrialRecord& r = records[id];
    std::size_t t = static_cast<std::size_t>(std::stoull(fields[1]));
    r.trajectory.emplace_back(t, parse_double(fields[2]));
    if (fields[3] == "1") r.stopping_time = t;
    if (diagnostics) {
      r.diagnostics.push_back(
          {t, parse_double(fields[4]), parse_double(fields[5]), parse_double(fields[6])});
    }
  }
  for (auto& r : records) {
    if (r.stopping_time) r.decision = Decision::kReject;
  }
  return records;
}

nlohmann::ordered_json trial_summary_json(const TrialRecord& record, std::size_t trial_id,
                                          std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["trial_id"] = trial_id;
  if (record.stopping_time) {
    j["stopping_time"] = *record.stopping_time;
  } else {
    j["stopping_time"] = nullptr;
  }
  j["decision"] = decision_name(record.decision);
  j["samples_consumed"] = record.samples_consumed;
  j["seed"] = seed;
  return j;
}

void apply_trial_summary(TrialRecord& record, const nlohmann::json& summary) {
  if (summary.at("stopping_time").is_null()) {
    record.stopping_time.reset();
  } else {
    record.stopping_time = summary.at("stopping_time").get<std::size_t>();
  }
  record.decision = summary.at("decision").get<std::string>() == "reject" ? Decision::kReject
                                                                          : Decision::kContinue;
  record.samples_consumed = summary.at("samples_consumed").get<std::size_t>();
  record.validate();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace davt
