#include "causalrec/explain.h"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "causalrec/io.h"

namespace causalrec::explain {

namespace {

using num::Value;

// (W6 [x_i ; x_i])^T x_j for every session item i, as an l x 1 column.
Value duplicated_projection(const Value& encodings, const Value& w6, std::span<const ItemIndex> session,
                            ItemIndex j) {
  const auto rows = num::make_indices(std::vector<num::Index>(session.begin(), session.end()));
  const Value xi = num::gather_rows(encodings, rows);
  const Value projected = num::matmul(num::concat_cols({xi, xi}), num::transpose(w6));
  const Value xj = num::gather_rows(encodings, num::make_indices({j}));
  return num::matmul(projected, num::transpose(xj));
}

Value gather_target(const Value& encodings, ItemIndex j) {
  return num::gather_rows(encodings, num::make_indices({j}));
}

std::vector<std::size_t> ranks_of(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> rank(scores.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  return rank;
}

std::string num_str(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string safe_component(std::string s) {
  std::replace(s.begin(), s.end(), '/', '_');
  std::replace(s.begin(), s.end(), '\\', '_');
  if (s.empty() || s == "." || s == "..") s = "_" + s;
  return s;
}

}  // namespace

Explainer::Explainer(const model::Model& model, const model::Parameters& params) : scorer_(model, params) {}

ExplanationReport Explainer::explain(const ingest::Session& session, ItemIndex item) {
  const auto& model = scorer_.model();
  if (item >= model.num_items()) throw std::invalid_argument("explain: item index out of range");
  if (session.items.empty()) throw std::invalid_argument("explain: empty session");

  ExplanationReport report;
  report.session_id = session.id;
  report.item = item;
  const auto breakdown = scorer_.score(session.items);
  report.causality = breakdown.causality[item];
  report.correlation = breakdown.correlation[item];
  report.preference = breakdown.preference[item];
  report.total = breakdown.total[item];

  const std::size_t l = session.items.size();
  std::vector<double> ca(l, 0.0), r(l, 0.0);
  num::Tape& tape = scorer_.tape();
  const std::size_t mark = tape.size();
  const auto& p = scorer_.bound();
  const auto& x = scorer_.items();
  if (model.causality_enabled()) {
    // Cause-side projection against the effect encoding of j, and the reverse.
    const auto rows = num::make_indices(std::vector<num::Index>(session.items.begin(), session.items.end()));
    const Value xc = num::gather_rows(x.cause, rows);
    const Value xe = num::gather_rows(x.effect, rows);
    const Value fwd =
        num::matmul(num::matmul(num::concat_cols({xc, xc}), num::transpose(p.cause.w6)),
                    num::transpose(gather_target(x.effect, item)));
    const Value bwd =
        num::matmul(num::matmul(num::concat_cols({xe, xe}), num::transpose(p.effect.w6)),
                    num::transpose(gather_target(x.cause, item)));
    const Value score = num::sub(fwd, num::scale(bwd, p.gamma1));
    for (std::size_t k = 0; k < l; ++k) ca[k] = score.value()[k];
  }
  if (model.correlation_enabled()) {
    const Value score = duplicated_projection(x.correlation, p.correlation.w6, session.items, item);
    for (std::size_t k = 0; k < l; ++k) r[k] = score.value()[k];
  }
  tape.rewind(mark);

  const auto ca_rank = ranks_of(ca);
  const auto r_rank = ranks_of(r);
  for (std::size_t k = 0; k < l; ++k) {
    report.rows.push_back({k, session.items[k], ca[k], r[k], ca_rank[k], r_rank[k]});
  }
  return report;
}

ExplanationReport Explainer::explain(const ingest::Session& session, const std::string& item_id,
                                     const ingest::Vocabulary& vocab) {
  const auto idx = vocab.find(item_id);
  if (!idx) throw std::invalid_argument("explain: item '" + item_id + "' is not in the vocabulary");
  return explain(session, *idx);
}

void write_report(std::ostream& out, const ExplanationReport& report, const ingest::Vocabulary* vocab) {
  auto name = [&](ItemIndex i) { return vocab ? vocab->id_of(i) : std::to_string(i); };
  out << "session " << report.session_id << '\n';
  out << "item " << name(report.item) << '\n';
  out << "score causality " << num_str(report.causality) << '\n';
  out << "score correlation " << num_str(report.correlation) << '\n';
  out << "score preference " << num_str(report.preference) << '\n';
  out << "score total " << num_str(report.total) << '\n';
  out << "items " << report.rows.size() << '\n';
  out << "position,item,causality,causality_rank,correlation,correlation_rank\n";
  for (const auto& row : report.rows) {
    out << row.position << ',' << name(row.item) << ',' << num_str(row.causality) << ',' << row.causality_rank
        << ',' << num_str(row.correlation) << ',' << row.correlation_rank << '\n';
  }
}

std::string report_filename(const std::string& session_id, const std::string& item_id) {
  return safe_component(session_id) + "__" + safe_component(item_id) + ".txt";
}

std::vector<std::filesystem::path> write_reports(const std::filesystem::path& dir,
                                                 std::span<const ExplanationReport> reports,
                                                 const ingest::Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& r : reports) {
    const auto path = dir / report_filename(r.session_id, vocab.id_of(r.item));
    io::write_atomic(path, [&](std::ostream& out) { write_report(out, r, &vocab); });
    written.push_back(path);
  }
  return written;
}

}  // namespace causalrec::explain
