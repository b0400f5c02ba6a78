#include "fdp/eval/metrics.hpp"

#include <numeric>
#include <string>

#include "fdp/error.hpp"

namespace fdp::eval {

std::size_t ConfusionCounts::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t ConfusionCounts::row_sum(std::size_t j) const {
  std::size_t s = 0;
  for (std::size_t k = 0; k < m_; ++k) s += at(j, k);
  return s;
}

std::size_t ConfusionCounts::col_sum(std::size_t j) const {
  std::size_t s = 0;
  for (std::size_t k = 0; k < m_; ++k) s += at(k, j);
  return s;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.m_ != m_) throw UsageError("confusion: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::vector<std::vector<std::size_t>> ConfusionCounts::rows() const {
  std::vector<std::vector<std::size_t>> out(m_);
  for (std::size_t i = 0; i < m_; ++i) out[i].assign(counts_.begin() + i * m_, counts_.begin() + (i + 1) * m_);
  return out;
}

ConfusionCounts confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t classes) {
  if (predictions.size() != labels.size()) {
    throw UsageError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  ConfusionCounts c(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predictions[i] >= classes) {
      throw DataError("confusion: sample " + std::to_string(i) + " has a class outside [0, " +
                      std::to_string(classes) + ")");
    }
    ++c.at(labels[i], predictions[i]);
  }
  return c;
}

double uar(const ConfusionCounts& c) {
  if (c.classes() == 0) throw UsageError("uar: no classes");
  double s = 0;
  for (std::size_t j = 0; j < c.classes(); ++j) {
    const std::size_t n = c.row_sum(j);
    if (n == 0) throw DataError("uar: class " + std::to_string(j) + " has no samples");
    s += static_cast<double>(c.tp(j)) / static_cast<double>(n);
  }
  return s / static_cast<double>(c.classes());
}

double war(const ConfusionCounts& c) {
  const std::size_t n = c.total();
  if (n == 0) throw DataError("war: no samples");
  std::size_t tp = 0;
  for (std::size_t j = 0; j < c.classes(); ++j) tp += c.tp(j);
  return static_cast<double>(tp) / static_cast<double>(n);
}

std::vector<double> class_f1(const ConfusionCounts& c) {
  std::vector<double> f(c.classes(), 0.0);
  for (std::size_t j = 0; j < c.classes(); ++j) {
    const double tp = static_cast<double>(c.tp(j));
    if (c.tp(j) == 0) continue;
    const double p = tp / (tp + static_cast<double>(c.fp(j)));
    const double r = tp / (tp + static_cast<double>(c.fn(j)));
    f[j] = 2 * p * r / (p + r);
  }
  return f;
}

double f1_score(const ConfusionCounts& c, F1Average average) {
  if (c.classes() == 0) throw UsageError("f1: no classes");
  const auto f = class_f1(c);
  if (average == F1Average::kMacro) {
    return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  }
  const std::size_t n = c.total();
  if (n == 0) return 0.0;
  double s = 0;
  for (std::size_t j = 0; j < f.size(); ++j) s += f[j] * static_cast<double>(c.row_sum(j));
  return s / static_cast<double>(n);
}

}  // namespace fdp::eval
