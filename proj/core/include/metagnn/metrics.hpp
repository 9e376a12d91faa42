#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace metagnn {

/// counts(t, p): clips of true class t predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  static ConfusionMatrix from_labels(std::span<const int> truth,
                                     std::span<const int> predicted,
                                     std::size_t classes);

  void add(int truth, int predicted);
  std::size_t classes() const { return classes_; }
  std::size_t total() const { return total_; }
  std::size_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }

 private:
  std::size_t classes_;
  std::size_t total_ = 0;
  std::vector<std::size_t> counts_;
};

/// Trace over total. Throws std::invalid_argument when empty.
double accuracy(const ConfusionMatrix& cm);

/// 2PR/(P+R) for one class; 0 when the class is neither present nor
/// predicted, or when P+R is zero.
double class_f1(const ConfusionMatrix& cm, std::size_t k);

/// Unweighted mean of class_f1 over every class. Throws when empty.
double macro_f1(const ConfusionMatrix& cm);

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

Metrics metrics_of(const ConfusionMatrix& cm);

}  // namespace metagnn
