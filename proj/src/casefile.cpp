#include "medcollab/casefile.hpp"

#include <fstream>
#include <sstream>

#include "medcollab/text.hpp"

namespace medcollab {

using nlohmann::json;

std::string_view section_name(Section s) {
  switch (s) {
    case Section::DB: return "DB";
    case Section::DD: return "DD";
    case Section::TP: return "TP";
    case Section::TX: return "TX";
  }
  return "?";
}

std::optional<Section> parse_section(std::string_view name) {
  for (Section s : kAllSections)
    if (section_name(s) == name) return s;
  return std::nullopt;
}

namespace {

std::set<std::string> unique_keys(const std::vector<std::string>& labels, const char* what) {
  std::set<std::string> keys;
  for (const auto& l : labels) {
    auto k = text::label_key(l);
    if (k.empty()) throw ValidationError(std::string("empty ") + what + " label in taxonomy");
    if (!keys.insert(k).second)
      throw ValidationError(std::string("duplicate ") + what + " label '" + l + "' in taxonomy");
  }
  return keys;
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& v, const char* key) {
  if (!v.is_array()) throw std::invalid_argument(std::string("field '") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

DepartmentTaxonomy::DepartmentTaxonomy(std::vector<std::string> departments, std::vector<std::string> modalities)
    : departments_(std::move(departments)),
      modalities_(std::move(modalities)),
      department_keys_(unique_keys(departments_, "department")),
      modality_keys_(unique_keys(modalities_, "modality")) {
  if (departments_.empty()) throw ValidationError("taxonomy has no departments");
  if (modalities_.empty()) throw ValidationError("taxonomy has no modalities");
}

DepartmentTaxonomy DepartmentTaxonomy::from_json(const json& j) {
  try {
    return DepartmentTaxonomy(string_list(require(j, "departments"), "departments"),
                              string_list(require(j, "modalities"), "modalities"));
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("taxonomy: ") + e.what());
  }
}

DepartmentTaxonomy DepartmentTaxonomy::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

bool DepartmentTaxonomy::has_department(std::string_view label) const {
  return department_keys_.contains(text::label_key(label));
}

bool DepartmentTaxonomy::has_modality(std::string_view label) const {
  return modality_keys_.contains(text::label_key(label));
}

std::vector<Violation> validate_case(const ClinicalCase& c, const DepartmentTaxonomy& taxonomy) {
  std::vector<Violation> out;
  if (text::trim(c.case_id).empty()) out.push_back({"case_id", "must be non-empty"});
  if (text::trim(c.chief_complaint).empty()) out.push_back({"chief_complaint", "must be non-empty"});

  std::map<std::string, int> seen;
  for (size_t i = 0; i < c.raw_findings.size(); ++i) {
    const auto& f = c.raw_findings[i];
    auto field = "raw_findings[" + std::to_string(i) + "]";
    if (text::trim(f.finding_id).empty()) out.push_back({field + ".finding_id", "must be non-empty"});
    else if (++seen[f.finding_id] == 2)
      out.push_back({"raw_findings.finding_id", "duplicate finding_id '" + f.finding_id + "'"});
    if (!taxonomy.has_modality(f.modality))
      out.push_back({field + ".modality", "unknown modality '" + f.modality + "'"});
  }

  if (c.gold) {
    if (c.gold->diagnoses.empty()) out.push_back({"gold.diagnoses", "must be non-empty"});
    for (const auto& d : c.gold->guide_departments)
      if (!taxonomy.has_department(d))
        out.push_back({"gold.guide_departments", "unknown department '" + d + "'"});
  }
  return out;
}

ClinicalCase case_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("case must be an object");
  ClinicalCase c;
  c.case_id = require_string(j, "case_id");
  c.chief_complaint = require_string(j, "chief_complaint");
  c.medical_history = j.contains("medical_history") ? require_string(j, "medical_history") : "";
  if (auto it = j.find("raw_findings"); it != j.end()) {
    if (!it->is_array()) throw std::invalid_argument("field 'raw_findings' must be an array");
    for (const auto& f : *it) {
      if (!f.is_object()) throw std::invalid_argument("raw finding must be an object");
      c.raw_findings.push_back(
          {require_string(f, "finding_id"), require_string(f, "modality"), require_string(f, "content")});
    }
  }
  if (auto it = j.find("gold"); it != j.end() && !it->is_null()) {
    const json& g = *it;
    if (!g.is_object()) throw std::invalid_argument("field 'gold' must be an object");
    GroundTruth gt;
    if (g.contains("guide_departments")) gt.guide_departments = string_list(g["guide_departments"], "guide_departments");
    gt.diagnoses = string_list(require(g, "diagnoses"), "diagnoses");
    if (auto s = g.find("sections"); s != g.end()) {
      if (!s->is_object()) throw std::invalid_argument("field 'sections' must be an object");
      for (const auto& [k, v] : s->items()) {
        auto sec = parse_section(k);
        if (!sec) throw std::invalid_argument("unknown section key '" + k + "'");
        if (!v.is_string()) throw std::invalid_argument("section '" + k + "' must be a string");
        gt.sections[*sec] = v.get<std::string>();
      }
    }
    c.gold = std::move(gt);
  }
  return c;
}

json case_to_json(const ClinicalCase& c) {
  json j{{"case_id", c.case_id},
         {"chief_complaint", c.chief_complaint},
         {"medical_history", c.medical_history},
         {"raw_findings", json::array()}};
  for (const auto& f : c.raw_findings)
    j["raw_findings"].push_back({{"finding_id", f.finding_id}, {"modality", f.modality}, {"content", f.content}});
  if (c.gold) {
    json sections = json::object();
    for (const auto& [s, t] : c.gold->sections) sections[std::string(section_name(s))] = t;
    j["gold"] = {{"guide_departments", c.gold->guide_departments},
                 {"diagnoses", c.gold->diagnoses},
                 {"sections", sections}};
  }
  return j;
}

std::vector<ClinicalCase> parse_dataset(const json& doc, const DepartmentTaxonomy& taxonomy) {
  const json* list = &doc;
  if (doc.is_object() && doc.contains("cases")) list = &doc["cases"];
  if (!list->is_array()) throw ParseError("dataset must be a JSON array of cases");

  std::vector<ClinicalCase> cases;
  std::set<std::string> ids;
  long index = 0;
  for (const auto& rec : *list) {
    ClinicalCase c;
    try {
      c = case_from_json(rec);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), index);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), index);
    }
    if (!ids.insert(c.case_id).second) throw DuplicateIdError(c.case_id);
    for (const auto& f : c.raw_findings)
      if (!taxonomy.has_modality(f.modality))
        throw UnknownLabelError(f.modality, "case '" + c.case_id + "': unknown modality label '" + f.modality + "'");
    if (c.gold)
      for (const auto& d : c.gold->guide_departments)
        if (!taxonomy.has_department(d))
          throw UnknownLabelError(d, "case '" + c.case_id + "': unknown department label '" + d + "'");
    if (auto v = validate_case(c, taxonomy); !v.empty())
      throw ParseError(v.front().field + ": " + v.front().message, index);
    cases.push_back(std::move(c));
    ++index;
  }
  return cases;
}

std::vector<ClinicalCase> load_dataset(const std::filesystem::path& path, const DepartmentTaxonomy& taxonomy) {
  return parse_dataset(read_json_file(path), taxonomy);
}

std::string serialize_dataset(const std::vector<ClinicalCase>& cases) {
  json arr = json::array();
  for (const auto& c : cases) arr.push_back(case_to_json(c));
  return arr.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
  auto body = read_file(path);
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace medcollab
