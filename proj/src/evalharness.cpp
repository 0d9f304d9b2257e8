#include "medcollab/evalharness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "medcollab/text.hpp"

namespace medcollab::eval {

using nlohmann::json;

SynonymTable::SynonymTable(const std::vector<std::vector<std::string>>& groups) {
  for (const auto& group : groups) {
    if (group.empty()) throw ValidationError("synonym group must be non-empty");
    const auto canonical = text::label_key(group.front());
    if (canonical.empty()) throw ValidationError("synonym group has an empty canonical label");
    for (const auto& form : group) {
      auto key = text::label_key(form);
      if (key.empty()) continue;
      auto [it, inserted] = forms_.emplace(key, canonical);
      if (!inserted && it->second != canonical)
        throw ValidationError("synonym '" + form + "' maps to both '" + it->second + "' and '" + canonical + "'");
    }
  }
  // canonical labels must be fixed points
  for (const auto& [key, canonical] : forms_) {
    auto it = forms_.find(canonical);
    if (it == forms_.end() || it->second != canonical)
      throw ValidationError("canonical label '" + canonical + "' is listed as a synonym of another group");
  }
}

SynonymTable SynonymTable::from_json(const json& j) {
  try {
    return SynonymTable(j.get<std::vector<std::vector<std::string>>>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("synonym file: ") + e.what());
  }
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

std::optional<std::string> SynonymTable::lookup(std::string_view term) const {
  if (auto it = forms_.find(text::label_key(term)); it != forms_.end()) return it->second;
  return std::nullopt;
}

std::vector<std::string> SynonymTable::canonical_labels() const {
  std::set<std::string> out;
  for (const auto& [k, c] : forms_) out.insert(c);
  return {out.begin(), out.end()};
}

std::string norm_term(std::string_view term, const SynonymTable& table) {
  if (auto hit = table.lookup(term)) return *hit;
  return text::label_key(term);
}

double accuracy(const std::vector<Prediction>& predictions, const SynonymTable& table) {
  if (predictions.empty()) throw PreconditionError("accuracy: no predictions");
  size_t hits = 0;
  for (const auto& p : predictions)
    if (norm_term(p.predicted, table) == norm_term(p.gold, table)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double cdr(const std::vector<CdrTerm>& per_case) {
  if (per_case.empty()) throw PreconditionError("cdr: no cases");
  size_t hits = 0;
  for (const auto& t : per_case) hits += (t.guide ? 1 : 0) * (t.diagnosis ? 1 : 0);
  return static_cast<double>(hits) / static_cast<double>(per_case.size());
}

bool dca_indicator(std::string_view predicted, const std::vector<std::string>& gold_departments) {
  if (gold_departments.empty()) throw PreconditionError("dca: missing gold departments");
  auto key = text::label_key(predicted);
  return std::any_of(gold_departments.begin(), gold_departments.end(),
                     [&](const std::string& g) { return text::label_key(g) == key; });
}

double dca(const std::vector<std::pair<std::string, std::vector<std::string>>>& per_case) {
  if (per_case.empty()) throw PreconditionError("dca: no cases");
  size_t hits = 0;
  for (const auto& [pred, gold] : per_case) hits += dca_indicator(pred, gold) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(per_case.size());
}

bool c_dept_indicator(std::string_view predicted, const DepartmentTaxonomy& taxonomy) {
  return taxonomy.has_department(predicted);
}

double c_dept(const std::vector<std::string>& predicted, const DepartmentTaxonomy& taxonomy) {
  if (predicted.empty()) throw PreconditionError("c_dept: no cases");
  size_t hits = 0;
  for (const auto& p : predicted) hits += c_dept_indicator(p, taxonomy) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

EntityExtractor gazetteer_extractor(const SynonymTable& table) {
  std::map<std::vector<std::string>, std::string> forms;
  size_t longest = 0;
  for (const auto& [key, canonical] : table.forms()) {
    auto toks = text::tokenize(key);
    if (toks.empty()) continue;
    longest = std::max(longest, toks.size());
    forms.emplace(std::move(toks), canonical);
  }
  return [forms = std::move(forms), longest](std::string_view s) {
    auto toks = text::tokenize(s);
    std::vector<std::string> out;
    size_t i = 0;
    while (i < toks.size()) {
      size_t matched = 0;
      for (size_t len = std::min(longest, toks.size() - i); len > 0; --len) {
        std::vector<std::string> window(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + len));
        if (auto it = forms.find(window); it != forms.end()) {
          out.push_back(it->second);
          matched = len;
          break;
        }
      }
      i += matched ? matched : 1;
    }
    return out;
  };
}

double entity_f1(std::string_view pred_text, std::string_view gold_text, const EntityExtractor& extractor) {
  auto p = extractor(pred_text);
  auto g = extractor(gold_text);
  std::set<std::string> pred(p.begin(), p.end()), gold(g.begin(), g.end());
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  size_t common = 0;
  for (const auto& e : pred) common += gold.contains(e) ? 1 : 0;
  if (common == 0) return 0.0;
  double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2 * precision * recall / (precision + recall);
}

namespace {

std::map<std::vector<std::string>, size_t> ngram_counts(const std::vector<std::string>& toks, size_t n) {
  std::map<std::vector<std::string>, size_t> counts;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

double bleu(std::string_view candidate, std::string_view reference) {
  const auto cand = text::tokenize(candidate);
  const auto ref = text::tokenize(reference);
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;

  double log_sum = 0;
  for (size_t n = 1; n <= 4; ++n) {
    auto cc = ngram_counts(cand, n);
    auto rc = ngram_counts(ref, n);
    size_t total = cand.size() >= n ? cand.size() - n + 1 : 0;
    size_t matched = 0;
    for (const auto& [gram, count] : cc)
      if (auto it = rc.find(gram); it != rc.end()) matched += std::min(count, it->second);
    double p = matched > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                           : 1.0 / static_cast<double>(total + 1);
    log_sum += std::log(p) / 4.0;
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = text::tokenize(candidate);
  const auto ref = text::tokenize(reference);
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<size_t> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
  for (size_t i = 1; i <= cand.size(); ++i) {
    for (size_t j = 1; j <= ref.size(); ++j)
      cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev[ref.size()]);
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(cand.size());
  const double r = lcs / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

MetricReport evaluate(const std::vector<CasePrediction>& predictions, const std::vector<ClinicalCase>& gold,
                      const SynonymTable& synonyms, const DepartmentTaxonomy& taxonomy, const EvalOptions& options) {
  std::map<std::string, const ClinicalCase*> by_id;
  for (const auto& c : gold) by_id[c.case_id] = &c;
  if (predictions.empty()) throw CaseMismatchError("no predictions to evaluate");

  auto extractor = options.extractor ? options.extractor : gazetteer_extractor(synonyms);

  std::vector<const CasePrediction*> ordered;
  for (const auto& p : predictions) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const CasePrediction* a, const CasePrediction* b) { return a->case_id < b->case_id; });

  MetricReport report;
  std::map<Section, std::pair<SectionScores, size_t>> section_acc;
  double f1_sum = 0, bleu_sum = 0, rouge_sum = 0;
  size_t text_cases = 0, section_pairs = 0;

  for (const auto* pred : ordered) {
    auto it = by_id.find(pred->case_id);
    if (it == by_id.end()) throw CaseMismatchError("report case_id '" + pred->case_id + "' not in gold dataset");
    const auto& gc = *it->second;
    if (!gc.gold) throw CaseMismatchError("gold case '" + gc.case_id + "' has no annotations");
    const auto& g = *gc.gold;

    CaseMetrics m;
    m.case_id = pred->case_id;
    m.acc = norm_term(pred->primary_diagnosis, synonyms) == norm_term(g.diagnoses.front(), synonyms);
    m.guide = m.dca = dca_indicator(pred->department, g.guide_departments);
    m.c_dept = c_dept_indicator(pred->department, taxonomy);
    if (options.diagnosis_rule == DiagnosisRule::primary_only) {
      m.diagnosis = m.acc;
    } else {
      std::set<std::string> predicted{norm_term(pred->primary_diagnosis, synonyms)};
      for (const auto& d : pred->diagnoses) predicted.insert(norm_term(d, synonyms));
      m.diagnosis = std::all_of(g.diagnoses.begin(), g.diagnoses.end(),
                                [&](const std::string& d) { return predicted.contains(norm_term(d, synonyms)); });
    }

    if (!g.sections.empty()) {
      std::string pred_text, gold_text;
      double cb = 0, cr = 0;
      for (const auto& [sec, ref] : g.sections) {
        auto ps = pred->sections.find(sec);
        const std::string cand = ps == pred->sections.end() ? std::string() : ps->second;
        pred_text += cand + "\n";
        gold_text += ref + "\n";
        double b = bleu(cand, ref), r = rouge_l(cand, ref);
        cb += b;
        cr += r;
        auto& [acc, n] = section_acc[sec];
        acc.bleu += b;
        acc.rouge_l += r;
        ++n;
        bleu_sum += b;
        rouge_sum += r;
        ++section_pairs;
      }
      m.bleu = cb / static_cast<double>(g.sections.size());
      m.rouge_l = cr / static_cast<double>(g.sections.size());
      m.entity_f1 = entity_f1(pred_text, gold_text, extractor);
      f1_sum += m.entity_f1;
      ++text_cases;
    }
    report.per_case.push_back(m);
  }

  const auto n = static_cast<double>(report.per_case.size());
  report.n_cases = report.per_case.size();
  size_t acc = 0, both = 0, dca_hits = 0, cdept = 0;
  for (const auto& m : report.per_case) {
    acc += m.acc;
    both += m.guide && m.diagnosis;
    dca_hits += m.dca;
    cdept += m.c_dept;
  }
  report.acc = static_cast<double>(acc) / n;
  report.cdr = static_cast<double>(both) / n;
  report.dca = static_cast<double>(dca_hits) / n;
  report.c_dept = static_cast<double>(cdept) / n;
  report.entity_f1 = text_cases ? f1_sum / static_cast<double>(text_cases) : 0.0;
  report.bleu = section_pairs ? bleu_sum / static_cast<double>(section_pairs) : 0.0;
  report.rouge_l = section_pairs ? rouge_sum / static_cast<double>(section_pairs) : 0.0;
  for (const auto& [sec, v] : section_acc)
    report.per_section[sec] = {v.first.bleu / static_cast<double>(v.second), v.first.rouge_l / static_cast<double>(v.second)};
  return report;
}

json to_json(const MetricReport& r) {
  json sections = json::object();
  for (const auto& [s, v] : r.per_section) sections[std::string(section_name(s))] = {{"bleu", v.bleu}, {"rouge_l", v.rouge_l}};
  return {{"acc", r.acc},         {"cdr", r.cdr},       {"dca", r.dca},       {"c_dept", r.c_dept},
          {"entity_f1", r.entity_f1}, {"bleu", r.bleu}, {"rouge_l", r.rouge_l}, {"n_cases", r.n_cases},
          {"per_section", sections}};
}

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string per_case_csv(const MetricReport& r) {
  std::string out = "case_id,acc,s_guide,s_diagnosis,dca,c_dept,entity_f1,bleu,rouge_l\n";
  for (const auto& m : r.per_case) {
    std::string id = m.case_id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char ch : id) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      id = q + "\"";
    }
    out += id + "," + std::to_string(int(m.acc)) + "," + std::to_string(int(m.guide)) + "," +
           std::to_string(int(m.diagnosis)) + "," + std::to_string(int(m.dca)) + "," + std::to_string(int(m.c_dept)) +
           "," + num(m.entity_f1) + "," + num(m.bleu) + "," + num(m.rouge_l) + "\n";
  }
  return out;
}

}  // namespace medcollab::eval
