#include "fdp/eval/protocols.hpp"

#include <algorithm>
#include <set>

namespace fdp::eval {

std::vector<std::string> subjects_of(const data::Manifest& manifest) {
  std::set<std::string> s;
  for (const auto& r : manifest.rows) s.insert(r.subject_id);
  return {s.begin(), s.end()};
}

FoldPlan loso_split(const data::Manifest& manifest) {
  const auto subjects = subjects_of(manifest);
  if (subjects.size() < 2) {
    throw DataError("loso: need at least 2 subjects, manifest has " + std::to_string(subjects.size()));
  }
  FoldPlan plan;
  for (const auto& s : subjects) {
    Fold f{s, {}, {}};
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
      (manifest.rows[i].subject_id == s ? f.test : f.train).push_back(i);
    }
    plan.push_back(std::move(f));
  }
  return plan;
}

FoldPlan holdout_split(const data::Manifest& manifest, const std::vector<std::string>& test_subjects) {
  const std::set<std::string> held(test_subjects.begin(), test_subjects.end());
  std::string tag;
  for (const auto& s : held) tag += (tag.empty() ? "" : "+") + s;
  Fold f{tag, {}, {}};
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    (held.count(manifest.rows[i].subject_id) ? f.test : f.train).push_back(i);
  }
  if (f.test.empty()) throw DataError("holdout: test set is empty (no clips from subjects '" + tag + "')");
  if (f.train.empty()) throw DataError("holdout: training set is empty");
  return {f};
}

}  // namespace fdp::eval
