#include "metagnn/metrics.hpp"

#include <stdexcept>
#include <string>

namespace metagnn {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw std::invalid_argument("confusion: zero classes");
}

ConfusionMatrix ConfusionMatrix::from_labels(std::span<const int> truth,
                                             std::span<const int> predicted,
                                             std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(truth.size()) +
                                " labels vs " +
                                std::to_string(predicted.size()) +
                                " predictions");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted) {
  const auto n = static_cast<int>(classes_);
  if (truth < 0 || truth >= n || predicted < 0 || predicted >= n) {
    throw std::invalid_argument("confusion: class id out of range");
  }
  ++counts_[static_cast<std::size_t>(truth) * classes_ +
            static_cast<std::size_t>(predicted)];
  ++total_;
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("accuracy of no clips");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) hit += cm(k, k);
  return static_cast<double>(hit) / static_cast<double>(cm.total());
}

double class_f1(const ConfusionMatrix& cm, std::size_t k) {
  std::size_t predicted = 0, actual = 0;
  for (std::size_t j = 0; j < cm.classes(); ++j) {
    predicted += cm(j, k);
    actual += cm(k, j);
  }
  const double tp = static_cast<double>(cm(k, k));
  if (predicted == 0 || actual == 0 || tp == 0.0) return 0.0;
  const double precision = tp / static_cast<double>(predicted);
  const double recall = tp / static_cast<double>(actual);
  return 2.0 * precision * recall / (precision + recall);
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("macro F1 of no clips");
  double s = 0.0;
  for (std::size_t k = 0; k < cm.classes(); ++k) s += class_f1(cm, k);
  return s / static_cast<double>(cm.classes());
}

Metrics metrics_of(const ConfusionMatrix& cm) {
  return {accuracy(cm), macro_f1(cm)};
}

}  // namespace metagnn
