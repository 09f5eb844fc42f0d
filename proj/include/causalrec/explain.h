#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "causalrec/ingest.h"
#include "causalrec/model.h"

namespace causalrec::explain {

// Contribution of one session item to the recommendation of item j.
struct ItemAttribution {
  std::size_t position = 0;
  ItemIndex item = 0;
  double causality = 0.0;
  double correlation = 0.0;
  // 1 = strongest within the session; ties go to the earlier position.
  std::size_t causality_rank = 0;
  std::size_t correlation_rank = 0;
};

struct ExplanationReport {
  std::string session_id;
  ItemIndex item = 0;
  // Session-level components of the score for `item`; identical to what the
  // model's scoring produces. Disabled channels report 0.
  double causality = 0.0;
  double correlation = 0.0;
  double preference = 0.0;
  double total = 0.0;
  std::vector<ItemAttribution> rows;  // session order
};

// Explanations against one trained model. Item encodings are computed once.
class Explainer {
 public:
  Explainer(const model::Model& model, const model::Parameters& params);

  ExplanationReport explain(const ingest::Session& session, ItemIndex item);
  // Resolves `item_id` through `vocab`; throws std::invalid_argument when the
  // item is unknown.
  ExplanationReport explain(const ingest::Session& session, const std::string& item_id,
                            const ingest::Vocabulary& vocab);

 private:
  model::Scorer scorer_;
};

// Plain-text rendering. Item ids are printed through `vocab` when given.
void write_report(std::ostream& out, const ExplanationReport& report, const ingest::Vocabulary* vocab = nullptr);

// `<session_id>__<item_id>.txt`, with path separators in either id replaced by '_'.
std::string report_filename(const std::string& session_id, const std::string& item_id);

// One report file per (session, item) pair under `dir`; returns the paths written.
std::vector<std::filesystem::path> write_reports(const std::filesystem::path& dir,
                                                 std::span<const ExplanationReport> reports,
                                                 const ingest::Vocabulary& vocab);

}  // namespace causalrec::explain
