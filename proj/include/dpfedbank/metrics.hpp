// Copyright 2026 The dpfedbank-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// JSON-lines round metrics and the end-of-run summary.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "dpfedbank/protocol.hpp"

namespace dpfedbank {

namespace detail {

inline Json id_list(const ClientSet& ids) {
  Json out = Json::array();
  for (ClientId id : ids) out.push_back(id);
  return out;
}

inline Json id_map(const std::map<ClientId, double>& values) {
  Json out = Json::object();
  for (const auto& [id, v] : values) out[std::to_string(id)] = v;
  return out;
}

inline Json optional_number(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace detail

inline Json record_to_json(const RoundRecord& r) {
  Json j;
  j["round"] = r.round;
  j["rule"] = r.rule;
  j["empty"] = r.empty;
  j["note"] = r.note;
  j["accuracy"] = r.accuracy;
  j["loss"] = r.loss;
  j["divisor"] = r.divisor;
  j["selected"] = detail::id_list(r.selected);
  j["budget_excluded"] = detail::id_list(r.budget_excluded);
  j["trust_excluded"] = detail::id_list(r.trust_excluded);
  j["attackers"] = detail::id_list(r.attackers);
  j["received"] = detail::id_list(r.received);
  j["verified"] = detail::id_list(r.verified);
  j["flagged"] = detail::id_list(r.flagged);
  j["aggregated"] = detail::id_list(r.aggregated);
  j["rejected_by_rule"] = detail::id_list(r.rejected_by_rule);
  Json failures = Json::object();
  for (const auto& [id, reason] : r.envelope_failures) {
    failures[std::to_string(id)] = std::string(reason_name(reason));
  }
  j["envelope_failures"] = failures;
  j["replays_rejected"] = r.replays_rejected;
  Json verdicts = Json::array();
  for (const auto& v : r.verdicts) {
    verdicts.push_back({{"client", v.client_id},
                        {"robust_z", v.robust_z},
                        {"flagged", v.flagged},
                        {"reason", std::string(reason_name(v.reason))}});
  }
  j["verdicts"] = verdicts;
  j["norm_center"] = r.norm_stats.center;
  j["norm_spread"] = r.norm_stats.spread;
  j["update_norms"] = detail::id_map(r.update_norms);
  j["pre_clip_norms"] = detail::id_map(r.pre_clip_norms);
  j["trust"] = detail::id_map(r.trust);
  j["cumulative_epsilon"] = detail::id_map(r.cumulative_epsilon);
  j["cumulative_delta"] = detail::id_map(r.cumulative_delta);
  j["detection"] = {{"tp", r.true_positives},
                    {"fn", r.false_negatives},
                    {"fp", r.false_positives},
                    {"tn", r.true_negatives},
                    {"tpr", detail::optional_number(r.tpr())},
                    {"fpr", detail::optional_number(r.fpr())}};
  return j;
}

struct RunSummary {
  std::size_t rounds = 0;
  std::size_t empty_rounds = 0;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  std::optional<double> mean_tpr;
  std::optional<double> mean_fpr;
  double max_cumulative_epsilon = 0.0;
};

inline RunSummary summarize(const std::vector<RoundRecord>& records) {
  RunSummary s;
  s.rounds = records.size();
  double tpr_sum = 0.0, fpr_sum = 0.0;
  std::size_t tpr_n = 0, fpr_n = 0;
  for (const auto& r : records) {
    if (r.empty) ++s.empty_rounds;
    if (auto v = r.tpr()) {
      tpr_sum += *v;
      ++tpr_n;
    }
    if (auto v = r.fpr()) {
      fpr_sum += *v;
      ++fpr_n;
    }
  }
  if (tpr_n) s.mean_tpr = tpr_sum / static_cast<double>(tpr_n);
  if (fpr_n) s.mean_fpr = fpr_sum / static_cast<double>(fpr_n);
  if (!records.empty()) {
    s.final_accuracy = records.back().accuracy;
    s.final_loss = records.back().loss;
    for (const auto& [id, eps] : records.back().cumulative_epsilon) {
      s.max_cumulative_epsilon = std::max(s.max_cumulative_epsilon, eps);
    }
  }
  return s;
}

inline Json summary_to_json(const RunSummary& s) {
  Json body;
  body["rounds"] = s.rounds;
  body["empty_rounds"] = s.empty_rounds;
  body["final_accuracy"] = s.final_accuracy;
  body["final_loss"] = s.final_loss;
  body["mean_tpr"] = detail::optional_number(s.mean_tpr);
  body["mean_fpr"] = detail::optional_number(s.mean_fpr);
  body["max_cumulative_epsilon"] = s.max_cumulative_epsilon;
  Json j;
  j["summary"] = body;
  return j;
}

/// One JSON object per round followed by the summary object.
inline std::string render_jsonl(const std::vector<RoundRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  out += summary_to_json(summarize(records)).dump();
  out += '\n';
  return out;
}

/// Writes through a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dpfedbank
