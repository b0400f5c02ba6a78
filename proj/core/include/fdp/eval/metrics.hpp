#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fdp::eval {

// m x m counts; rows are true classes, columns predictions.
class ConfusionCounts {
 public:
  explicit ConfusionCounts(std::size_t classes = 0) : m_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return m_; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * m_ + pred]; }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * m_ + pred]; }

  std::size_t total() const;
  std::size_t tp(std::size_t j) const { return at(j, j); }
  std::size_t fn(std::size_t j) const { return row_sum(j) - tp(j); }
  std::size_t fp(std::size_t j) const { return col_sum(j) - tp(j); }
  std::size_t row_sum(std::size_t j) const;
  std::size_t col_sum(std::size_t j) const;

  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;

  std::vector<std::vector<std::size_t>> rows() const;

 private:
  std::size_t m_;
  std::vector<std::size_t> counts_;
};

ConfusionCounts confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t classes);

// Mean per-class recall. Throws if some class has no samples.
double uar(const ConfusionCounts& c);
// Overall accuracy, trace / N. Throws if N = 0.
double war(const ConfusionCounts& c);

enum class F1Average { kMacro, kWeighted };

// Per-class F1, defined as 0 when TP_j = 0.
std::vector<double> class_f1(const ConfusionCounts& c);
// kMacro: unweighted mean over classes; kWeighted: weighted by class support.
double f1_score(const ConfusionCounts& c, F1Average average = F1Average::kMacro);
inline double macro_f1(const ConfusionCounts& c) { return f1_score(c, F1Average::kMacro); }

}  // namespace fdp::eval
