#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcollab/error.hpp"

namespace medcollab {

/// Final-report and gold-reference sections.
enum class Section { DB, DD, TP, TX };

inline constexpr Section kAllSections[] = {Section::DB, Section::DD, Section::TP, Section::TX};

std::string_view section_name(Section s);
std::optional<Section> parse_section(std::string_view name);

struct RawFinding {
  std::string finding_id;
  std::string modality;
  std::string content;
};

struct GroundTruth {
  std::vector<std::string> guide_departments;
  std::vector<std::string> diagnoses;  // diagnoses.front() is the primary gold diagnosis
  std::map<Section, std::string> sections;
};

struct ClinicalCase {
  std::string case_id;
  std::string chief_complaint;
  std::string medical_history;
  std::vector<RawFinding> raw_findings;
  std::optional<GroundTruth> gold;
};

/// Valid departments and examination modalities. Labels compare after folding and trimming.
class DepartmentTaxonomy {
 public:
  DepartmentTaxonomy(std::vector<std::string> departments, std::vector<std::string> modalities);

  static DepartmentTaxonomy from_json(const nlohmann::json& j);
  static DepartmentTaxonomy load(const std::filesystem::path& path);

  bool has_department(std::string_view label) const;
  bool has_modality(std::string_view label) const;

  const std::vector<std::string>& departments() const { return departments_; }
  const std::vector<std::string>& modalities() const { return modalities_; }

 private:
  std::vector<std::string> departments_;
  std::vector<std::string> modalities_;
  std::set<std::string> department_keys_;
  std::set<std::string> modality_keys_;
};

struct Violation {
  std::string field;
  std::string message;
};

class DuplicateIdError : public ValidationError {
 public:
  explicit DuplicateIdError(std::string id)
      : ValidationError("duplicate case_id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class UnknownLabelError : public ValidationError {
 public:
  UnknownLabelError(std::string label, const std::string& what)
      : ValidationError(what), label_(std::move(label)) {}
  const std::string& label() const { return label_; }

 private:
  std::string label_;
};

std::vector<Violation> validate_case(const ClinicalCase& c, const DepartmentTaxonomy& taxonomy);

ClinicalCase case_from_json(const nlohmann::json& j);
nlohmann::json case_to_json(const ClinicalCase& c);

/// Parses a dataset document (array of cases, or {"cases": [...]}) and checks every invariant.
std::vector<ClinicalCase> parse_dataset(const nlohmann::json& doc, const DepartmentTaxonomy& taxonomy);
std::vector<ClinicalCase> load_dataset(const std::filesystem::path& path, const DepartmentTaxonomy& taxonomy);
std::string serialize_dataset(const std::vector<ClinicalCase>& cases);

/// Reads a whole file; throws ParseError when unreadable.
std::string read_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace medcollab
