// Five hand-scored prediction/gold pairs shared by the metric tests and the acceptance run.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "medcollab/evalharness.hpp"

namespace metrics_fixture {

using namespace medcollab;
using namespace medcollab::eval;

inline SynonymTable table() {
  return SynonymTable({{"myocardial infarction", "MI", "heart attack"},
                       {"pneumonia", "lung infection"},
                       {"anemia", "anaemia"},
                       {"rib fracture", "broken rib"},
                       {"stroke"},
                       {"appendicitis"}});
}

inline DepartmentTaxonomy taxonomy() {
  return DepartmentTaxonomy({"Cardiology", "Respiratory", "Hematology", "Orthopedics", "Neurology", "Surgery"},
                            {"lab", "imaging"});
}

inline ClinicalCase gold_case(std::string id, std::vector<std::string> depts, std::vector<std::string> dx,
                       std::map<Section, std::string> sections = {}) {
  ClinicalCase c;
  c.case_id = std::move(id);
  c.chief_complaint = "x";
  c.gold = GroundTruth{std::move(depts), std::move(dx), std::move(sections)};
  return c;
}

// Five hand-scored cases. Sections only on c1 and c3.
struct Fixture {
  std::vector<ClinicalCase> gold{
      gold_case("c1", {"Cardiology"}, {"myocardial infarction"}, {{Section::DB, "Heart attack with anaemia."}}),
      gold_case("c2", {"Respiratory"}, {"pneumonia"}),
      gold_case("c3", {"Hematology", "Orthopedics"}, {"rib fracture", "anemia"},
                {{Section::DB, "Rib fracture and anemia."}}),
      gold_case("c4", {"Neurology"}, {"stroke"}),
      gold_case("c5", {"Surgery"}, {"appendicitis"}),
  };
  std::vector<CasePrediction> preds{
      {"c1", "cardiology", "MI", {}, {{Section::DB, "MI."}}},
      {"c2", "Respiratory", "Lung Infection", {}, {}},
      {"c3", "Orthopedics", "rib fracture", {"rib fracture"}, {{Section::DB, "Broken rib, anaemia, pneumonia."}}},
      {"c4", "Cardiology", "stroke", {}, {}},
      {"c5", "Gastroenterology", "gastritis", {}, {}},
  };
};

// Hand-computed expectations for Fixture.
inline constexpr double kAcc = 0.8;   // c1, c2 via synonyms; c3, c4 literal
inline constexpr double kCdr = 0.4;   // c1, c2
inline constexpr double kDca = 0.6;   // c1, c2, c3
inline constexpr double kCDept = 0.8; // all but Gastroenterology
// c1: {mi} vs {mi, anemia} -> 2/3; c3: {rib fracture, anemia, pneumonia} vs {rib fracture, anemia} -> 0.8
inline constexpr double kEntityF1 = (2.0 / 3.0 + 0.8) / 2.0;

}  // namespace metrics_fixture
