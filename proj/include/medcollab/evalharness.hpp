#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcollab/casefile.hpp"

namespace medcollab::eval {

/// Medical synonym normalization. Keys and canonical labels are stored folded and trimmed.
class SynonymTable {
 public:
  SynonymTable() = default;
  /// Each group lists surface forms; the first is canonical.
  explicit SynonymTable(const std::vector<std::vector<std::string>>& groups);

  static SynonymTable from_json(const nlohmann::json& j);
  static SynonymTable load(const std::filesystem::path& path);

  std::optional<std::string> lookup(std::string_view term) const;
  /// Every (surface form key, canonical) pair, for gazetteer matching.
  const std::map<std::string, std::string>& forms() const { return forms_; }
  std::vector<std::string> canonical_labels() const;

 private:
  std::map<std::string, std::string> forms_;
};

/// Canonical label on a table hit, otherwise the folded, trimmed input.
std::string norm_term(std::string_view term, const SynonymTable& table);

struct Prediction {
  std::string predicted;  // p_i
  std::string gold;       // G_{i,1}
};

double accuracy(const std::vector<Prediction>& predictions, const SynonymTable& table);

struct CdrTerm {
  bool guide = false;
  bool diagnosis = false;
};

double cdr(const std::vector<CdrTerm>& per_case);

/// 1 iff the normalized predicted department is one of the gold guide departments.
bool dca_indicator(std::string_view predicted, const std::vector<std::string>& gold_departments);
double dca(const std::vector<std::pair<std::string, std::vector<std::string>>>& per_case);

bool c_dept_indicator(std::string_view predicted, const DepartmentTaxonomy& taxonomy);
double c_dept(const std::vector<std::string>& predicted, const DepartmentTaxonomy& taxonomy);

/// Pluggable entity extractor: text to normalized entity labels.
using EntityExtractor = std::function<std::vector<std::string>(std::string_view)>;

/// Longest-match, non-overlapping gazetteer over every surface form in the table, mapped to canonical.
EntityExtractor gazetteer_extractor(const SynonymTable& table);

double entity_f1(std::string_view pred_text, std::string_view gold_text, const EntityExtractor& extractor);

/// BLEU-4, uniform weights, add-one smoothing for orders with zero matches, brevity penalty.
double bleu(std::string_view candidate, std::string_view reference);

/// LCS F-measure (beta = 1) on the same tokenization as bleu.
double rouge_l(std::string_view candidate, std::string_view reference);

/// Hook for an external entity-aware semantic scorer such as RaTEScore; not computed in-core.
using SemanticScorer = std::function<double(std::string_view candidate, std::string_view reference)>;

enum class DiagnosisRule { full_set, primary_only };

/// One system output as read from a report file.
struct CasePrediction {
  std::string case_id;
  std::string department;
  std::string primary_diagnosis;
  std::vector<std::string> diagnoses;
  std::map<Section, std::string> sections;
};

struct SectionScores {
  double bleu = 0;
  double rouge_l = 0;
};

struct CaseMetrics {
  std::string case_id;
  bool acc = false;
  bool guide = false;
  bool diagnosis = false;
  bool dca = false;
  bool c_dept = false;
  double entity_f1 = 0;
  double bleu = 0;
  double rouge_l = 0;
};

struct MetricReport {
  double acc = 0, cdr = 0, dca = 0, c_dept = 0, entity_f1 = 0, bleu = 0, rouge_l = 0;
  size_t n_cases = 0;
  std::map<Section, SectionScores> per_section;
  std::vector<CaseMetrics> per_case;
};

struct EvalOptions {
  DiagnosisRule diagnosis_rule = DiagnosisRule::full_set;
  EntityExtractor extractor;  // defaults to the gazetteer over the synonym table
};

/// Scores predictions against gold cases matched by case_id. Every prediction must have a gold case.
MetricReport evaluate(const std::vector<CasePrediction>& predictions, const std::vector<ClinicalCase>& gold,
                      const SynonymTable& synonyms, const DepartmentTaxonomy& taxonomy,
                      const EvalOptions& options = {});

nlohmann::json to_json(const MetricReport& r);
std::string per_case_csv(const MetricReport& r);

class CaseMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace medcollab::eval
