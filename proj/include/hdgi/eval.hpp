#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hdgi/random.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

// -- logistic regression ------------------------------------------------------

// Multinomial logistic regression weights, (F+1) x C with the bias in the
// last row. Trained by full-batch gradient descent on mean cross-entropy.
struct LogRegModel {
  Tensor weights;
  int num_classes = 0;

  std::vector<int> predict(const Tensor& x) const {
    std::vector<int> out(static_cast<std::size_t>(x.rows));
    for (int i = 0; i < x.rows; ++i) {
      int best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < num_classes; ++c) {
        double score = weights.at(x.cols, c);  // bias row
        for (int f = 0; f < x.cols; ++f) score += x.at(i, f) * weights.at(f, c);
        if (score > best_score) {
          best_score = score;
          best = c;
        }
      }
      out[static_cast<std::size_t>(i)] = best;
    }
    return out;
  }
};

namespace detail {

// Softmax cross-entropy value and gradient for the (F+1) x C weight matrix.
inline double logreg_loss_grad(const Tensor& x, const std::vector<int>& y, const Tensor& w,
                               int num_classes, double l2, Tensor* grad) {
  const int n = x.rows;
  const int f = x.cols;
  if (grad) *grad = Tensor(f + 1, num_classes);
  double loss = 0.0;
  std::vector<double> logits(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < n; ++i) {
    double maxv = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_classes; ++c) {
      double s = w.at(f, c);
      for (int k = 0; k < f; ++k) s += x.at(i, k) * w.at(k, c);
      logits[static_cast<std::size_t>(c)] = s;
      maxv = std::max(maxv, s);
    }
    double denom = 0.0;
    for (int c = 0; c < num_classes; ++c)
      denom += std::exp(logits[static_cast<std::size_t>(c)] - maxv);
    const int yi = y[static_cast<std::size_t>(i)];
    loss += -(logits[static_cast<std::size_t>(yi)] - maxv - std::log(denom));
    if (grad) {
      for (int c = 0; c < num_classes; ++c) {
        const double p = std::exp(logits[static_cast<std::size_t>(c)] - maxv) / denom;
        const double delta = (p - (c == yi ? 1.0 : 0.0)) / n;
        for (int k = 0; k < f; ++k) grad->at(k, c) += delta * x.at(i, k);
        grad->at(f, c) += delta;
      }
    }
  }
  loss /= n;
  if (l2 > 0.0) {
    for (int k = 0; k < f; ++k) {  // bias row excluded from the penalty
      for (int c = 0; c < num_classes; ++c) {
        loss += 0.5 * l2 * w.at(k, c) * w.at(k, c);
        if (grad) grad->at(k, c) += l2 * w.at(k, c);
      }
    }
  }
  return loss;
}

inline Tensor select_rows(const Tensor& x, const std::vector<int>& idx) {
  Tensor out(static_cast<int>(idx.size()), x.cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int c = 0; c < x.cols; ++c) out.at(static_cast<int>(i), c) = x.at(idx[i], c);
  return out;
}

template <typename T>
inline std::vector<T> select(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace detail

struct LogRegOptions {
  int epochs = 300;
  double learning_rate = 0.5;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  int patience = 0;  // > 0 enables early stopping on validation loss
};

// Plain fit on the training set; with a validation set and patience > 0 the
// best-validation-loss weights are kept.
inline LogRegModel logreg_fit(const Tensor& x, const std::vector<int>& y,
                              const LogRegOptions& opt, const Tensor* x_val = nullptr,
                              const std::vector<int>* y_val = nullptr) {
  if (x.rows < 1 || x.cols < 1)
    throw std::invalid_argument("logreg_fit: empty or zero-dimensional input");
  if (static_cast<int>(y.size()) != x.rows)
    throw std::invalid_argument("logreg_fit: label count does not match rows");
  const int num_classes = *std::max_element(y.begin(), y.end()) + 1;
  std::vector<char> present(static_cast<std::size_t>(num_classes), 0);
  for (int c : y) {
    if (c < 0) throw std::invalid_argument("logreg_fit: negative class id");
    present[static_cast<std::size_t>(c)] = 1;
  }
  if (std::count(present.begin(), present.end(), 1) < 2)
    throw std::invalid_argument("logreg_fit: training data contains a single class");

  LogRegModel model;
  model.num_classes = num_classes;
  Rng rng(opt.seed);
  model.weights = Tensor(x.cols + 1, num_classes);
  for (auto& v : model.weights.data) v = rng.uniform(-1e-3, 1e-3);

  Tensor best = model.weights;
  double best_val = std::numeric_limits<double>::infinity();
  int bad = 0;
  Tensor grad;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    detail::logreg_loss_grad(x, y, model.weights, num_classes, opt.l2, &grad);
    for (std::size_t k = 0; k < model.weights.size(); ++k)
      model.weights.data[k] -= opt.learning_rate * grad.data[k];
    if (x_val && y_val && opt.patience > 0) {
      const double val =
          detail::logreg_loss_grad(*x_val, *y_val, model.weights, num_classes, 0.0, nullptr);
      if (val < best_val) {
        best_val = val;
        best = model.weights;
        bad = 0;
      } else if (++bad >= opt.patience) {
        break;
      }
    }
  }
  if (x_val && y_val && opt.patience > 0 && std::isfinite(best_val)) model.weights = best;
  return model;
}

// -- classification metrics ---------------------------------------------------

// Micro-F1 pools counts globally (equal to accuracy for single-label
// multiclass); Macro-F1 averages per-class F1 over classes present in either
// vector.
inline std::pair<double, double> f1_scores(const std::vector<int>& predicted,
                                           const std::vector<int>& actual) {
  if (predicted.empty()) throw std::invalid_argument("f1_scores: empty input");
  if (predicted.size() != actual.size())
    throw std::invalid_argument("f1_scores: length mismatch");
  int max_class = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    max_class = std::max({max_class, predicted[i], actual[i]});
  const std::size_t c = static_cast<std::size_t>(max_class) + 1;
  std::vector<long> tp(c, 0), fp(c, 0), fn(c, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == actual[i])
      ++tp[static_cast<std::size_t>(actual[i])];
    else {
      ++fp[static_cast<std::size_t>(predicted[i])];
      ++fn[static_cast<std::size_t>(actual[i])];
    }
  }
  long tp_sum = 0, fp_sum = 0, fn_sum = 0;
  double macro = 0.0;
  int macro_classes = 0;
  for (std::size_t k = 0; k < c; ++k) {
    tp_sum += tp[k];
    fp_sum += fp[k];
    fn_sum += fn[k];
    if (tp[k] + fp[k] + fn[k] == 0) continue;  // class absent from both
    macro += 2.0 * tp[k] / static_cast<double>(2 * tp[k] + fp[k] + fn[k]);
    ++macro_classes;
  }
  const double micro = 2.0 * tp_sum / static_cast<double>(2 * tp_sum + fp_sum + fn_sum);
  return {micro, macro_classes > 0 ? macro / macro_classes : 0.0};
}

// -- clustering ---------------------------------------------------------------

namespace detail {

inline double sq_dist(const Tensor& x, int row, const std::vector<double>& center) {
  double d = 0.0;
  for (int c = 0; c < x.cols; ++c) {
    const double diff = x.at(row, c) - center[static_cast<std::size_t>(c)];
    d += diff * diff;
  }
  return d;
}

}  // namespace detail

struct KMeansResult {
  std::vector<int> assignments;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

// k-means++ seeding followed by Lloyd iterations until the assignment
// fixpoint or max_iters. Empty clusters are repaired by promoting the point
// farthest from its centroid.
inline KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed, int max_iters = 100) {
  const int n = points.rows;
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  std::vector<std::vector<double>> distinct;
  for (int i = 0; i < n && static_cast<int>(distinct.size()) < k; ++i) {
    std::vector<double> row(points.data.begin() + static_cast<std::ptrdiff_t>(i) * points.cols,
                            points.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * points.cols);
    if (std::find(distinct.begin(), distinct.end(), row) == distinct.end())
      distinct.push_back(std::move(row));
  }
  if (static_cast<int>(distinct.size()) < k)
    throw std::invalid_argument("kmeans: k exceeds the number of distinct points");

  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<std::size_t>(k));
  // k-means++: first center uniform, then proportional to squared distance
  {
    const int first = rng.uniform_int(n);
    centers.emplace_back(points.data.begin() + static_cast<std::ptrdiff_t>(first) * points.cols,
                         points.data.begin() + static_cast<std::ptrdiff_t>(first + 1) * points.cols);
    std::vector<double> d2(static_cast<std::size_t>(n));
    while (static_cast<int>(centers.size()) < k) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, detail::sq_dist(points, i, c));
        d2[static_cast<std::size_t>(i)] = best;
        total += best;
      }
      int chosen = -1;
      if (total > 0.0) {
        double r = rng.uniform() * total;
        for (int i = 0; i < n; ++i) {
          r -= d2[static_cast<std::size_t>(i)];
          if (r <= 0.0) {
            chosen = i;
            break;
          }
        }
      }
      if (chosen < 0) {
        // all mass at existing centers; pick any point not already a center
        for (int i = 0; i < n && chosen < 0; ++i)
          if (d2[static_cast<std::size_t>(i)] > 0.0) chosen = i;
        if (chosen < 0) chosen = rng.uniform_int(n);
      }
      centers.emplace_back(points.data.begin() + static_cast<std::ptrdiff_t>(chosen) * points.cols,
                           points.data.begin() + static_cast<std::ptrdiff_t>(chosen + 1) * points.cols);
    }
  }

  KMeansResult result;
  result.assignments.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    result.inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = detail::sq_dist(points, i, centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (result.assignments[static_cast<std::size_t>(i)] != best) {
        result.assignments[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
      result.inertia += best_d;
    }
    result.iterations = iter + 1;
    result.inertia_history.push_back(result.inertia);
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k),
                                          std::vector<double>(static_cast<std::size_t>(points.cols), 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int a = result.assignments[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(a)];
      for (int c = 0; c < points.cols; ++c)
        sums[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] += points.at(i, c);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // empty cluster: promote the point farthest from its centroid
        int farthest = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = detail::sq_dist(
              points, i, centers[static_cast<std::size_t>(result.assignments[static_cast<std::size_t>(i)])]);
          if (d > far_d) {
            far_d = d;
            farthest = i;
          }
        }
        for (int j = 0; j < points.cols; ++j)
          centers[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] = points.at(farthest, j);
        result.assignments[static_cast<std::size_t>(farthest)] = c;
      } else {
        for (int j = 0; j < points.cols; ++j)
          centers[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] =
              sums[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] / counts[static_cast<std::size_t>(c)];
      }
    }
  }
  return result;
}

// -- partition comparison metrics ---------------------------------------------

namespace detail {

inline std::vector<std::vector<long>> contingency(const std::vector<int>& a,
                                                  const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("partition metrics: length mismatch");
  if (a.empty()) throw std::invalid_argument("partition metrics: empty partitions");
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::vector<long>> table(static_cast<std::size_t>(ka),
                                       std::vector<long>(static_cast<std::size_t>(kb), 0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) throw std::invalid_argument("partition metrics: negative label");
    ++table[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])];
  }
  return table;
}

}  // namespace detail

// Normalized mutual information with arithmetic-mean normalization;
// 0/0 is defined as 0.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const auto table = detail::contingency(a, b);
  const double n = static_cast<double>(a.size());
  std::vector<double> pa(table.size(), 0.0);
  std::vector<double> pb(table.front().size(), 0.0);
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      pa[i] += table[i][j] / n;
      pb[j] += table[i][j] / n;
    }
  auto entropy = [](const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
      if (v > 0.0) h -= v * std::log(v);
    return h;
  };
  const double ha = entropy(pa);
  const double hb = entropy(pb);
  double mi = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      const double pij = table[i][j] / n;
      if (pij > 0.0) mi += pij * std::log(pij / (pa[i] * pb[j]));
    }
  const double norm = 0.5 * (ha + hb);
  if (norm <= 0.0) return 0.0;
  return std::clamp(mi / norm, 0.0, 1.0);
}

// Adjusted Rand index by pair counting with expected-index correction.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  const auto table = detail::contingency(a, b);
  auto choose2 = [](long x) { return 0.5 * x * (x - 1); };
  const long n = static_cast<long>(a.size());
  double sum_cells = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : table) {
    long ra = 0;
    for (long v : row) {
      sum_cells += choose2(v);
      ra += v;
    }
    sum_a += choose2(ra);
  }
  for (std::size_t j = 0; j < table.front().size(); ++j) {
    long cb = 0;
    for (const auto& row : table) cb += row[j];
    sum_b += choose2(cb);
  }
  const double total_pairs = choose2(n);
  if (total_pairs == 0.0) return 1.0;  // single element: trivially identical
  const double expected = sum_a * sum_b / total_pairs;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) {
    // degenerate partitions (all singletons or one cluster on both sides)
    return sum_cells == expected ? 1.0 : 0.0;
  }
  return (sum_cells - expected) / (max_index - expected);
}

// -- evaluation protocols -------------------------------------------------------

// One metric across protocol repeats plus the protocol metadata.
struct EvalReport {
  std::string metric;
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;
  double train_ratio = 0.0;
  int repeats = 0;
  std::uint64_t seed = 0;

  void finalize() {
    repeats = static_cast<int>(values.size());
    mean = std::accumulate(values.begin(), values.end(), 0.0) / repeats;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    stddev = repeats > 1 ? std::sqrt(var / repeats) : 0.0;
  }
};

namespace detail {

inline int eval_threads(int repeats) {
  int limit = static_cast<int>(std::thread::hardware_concurrency());
  if (limit < 1) limit = 1;
  if (const char* env = std::getenv("HDGI_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed >= 1) limit = parsed;
  }
  return std::min(limit, repeats);
}

// Runs fn(repeat_index) for every repeat, possibly across threads. Results
// are indexed, so the outcome never depends on the thread count.
template <typename Fn>
inline void parallel_repeats(int repeats, Fn&& fn) {
  const int threads = eval_threads(repeats);
  if (threads <= 1) {
    for (int r = 0; r < repeats; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&fn, t, threads, repeats]() {
      for (int r = t; r < repeats; r += threads) fn(r);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

struct ClassificationProtocolOptions {
  double train_ratio = 0.8;  // paper uses 0.2 and 0.8; validation and test are 10% each
  int repeats = 10;
  std::uint64_t seed = 0;
  LogRegOptions logreg{300, 0.5, 0.0, 0, 20};
};

// Per repeat: uniform shuffle split into train / 10% validation / 10% test
// (remainder unused), logistic regression fit with validation early
// stopping, Micro/Macro-F1 on the test split.
inline std::pair<EvalReport, EvalReport> run_classification_protocol(
    const Tensor& embeddings, const std::vector<int>& labels,
    const ClassificationProtocolOptions& opt) {
  const int n = embeddings.rows;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("classification protocol: label count mismatch");
  if (!(opt.train_ratio > 0.0 && opt.train_ratio <= 0.8))
    throw std::invalid_argument("classification protocol: train_ratio must lie in (0, 0.8]");
  const int n_val = static_cast<int>(std::lround(0.1 * n));
  const int n_test = static_cast<int>(std::lround(0.1 * n));
  const int n_train = static_cast<int>(std::lround(opt.train_ratio * n));
  if (n_train < 2 || n_val < 1 || n_test < 1 || n_train + n_val + n_test > n)
    throw std::invalid_argument("classification protocol: too few samples for split");

  std::vector<double> micros(static_cast<std::size_t>(opt.repeats));
  std::vector<double> macros(static_cast<std::size_t>(opt.repeats));
  std::vector<std::string> errors(static_cast<std::size_t>(opt.repeats));
  detail::parallel_repeats(opt.repeats, [&](int r) {
    try {
      Rng rng = derive_rng(opt.seed, static_cast<std::uint64_t>(r));
      std::vector<int> order = rng.permutation(n);
      const std::vector<int> train_idx(order.begin(), order.begin() + n_train);
      const std::vector<int> val_idx(order.begin() + n_train, order.begin() + n_train + n_val);
      const std::vector<int> test_idx(order.begin() + n_train + n_val,
                                      order.begin() + n_train + n_val + n_test);
      const Tensor x_train = detail::select_rows(embeddings, train_idx);
      const Tensor x_val = detail::select_rows(embeddings, val_idx);
      const Tensor x_test = detail::select_rows(embeddings, test_idx);
      const std::vector<int> y_train = detail::select(labels, train_idx);
      const std::vector<int> y_val = detail::select(labels, val_idx);
      const std::vector<int> y_test = detail::select(labels, test_idx);
      LogRegOptions lr_opt = opt.logreg;
      lr_opt.seed = derive_rng(opt.seed, 1000003ULL + static_cast<std::uint64_t>(r)).next_u64();
      const LogRegModel model = logreg_fit(x_train, y_train, lr_opt, &x_val, &y_val);
      const auto [micro, macro] = f1_scores(model.predict(x_test), y_test);
      micros[static_cast<std::size_t>(r)] = micro;
      macros[static_cast<std::size_t>(r)] = macro;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(r)] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("classification protocol: " + e);

  EvalReport micro_report{"micro_f1", std::move(micros)};
  EvalReport macro_report{"macro_f1", std::move(macros)};
  for (auto* rep : {&micro_report, &macro_report}) {
    rep->train_ratio = opt.train_ratio;
    rep->seed = opt.seed;
    rep->finalize();
  }
  return {std::move(micro_report), std::move(macro_report)};
}

struct ClusteringProtocolOptions {
  int repeats = 10;
  std::uint64_t seed = 0;
  int max_iters = 100;
};

// K-means with K = class count, repeated with fresh seeds; reports NMI and
// ARI against the labels.
inline std::pair<EvalReport, EvalReport> run_clustering_protocol(
    const Tensor& embeddings, const std::vector<int>& labels,
    const ClusteringProtocolOptions& opt) {
  if (static_cast<int>(labels.size()) != embeddings.rows)
    throw std::invalid_argument("clustering protocol: label count mismatch");
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  // fewer distinct points than clusters: degenerate single-cluster outcome
  int distinct = 0;
  {
    std::vector<std::vector<double>> seen;
    for (int i = 0; i < embeddings.rows && distinct < k; ++i) {
      std::vector<double> row(embeddings.data.begin() + static_cast<std::ptrdiff_t>(i) * embeddings.cols,
                              embeddings.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * embeddings.cols);
      if (std::find(seen.begin(), seen.end(), row) == seen.end()) {
        seen.push_back(std::move(row));
        ++distinct;
      }
    }
  }
  std::vector<double> nmis(static_cast<std::size_t>(opt.repeats));
  std::vector<double> aris(static_cast<std::size_t>(opt.repeats));
  std::vector<std::string> errors(static_cast<std::size_t>(opt.repeats));
  detail::parallel_repeats(opt.repeats, [&](int r) {
    try {
      const std::uint64_t repeat_seed =
          derive_rng(opt.seed, static_cast<std::uint64_t>(r)).next_u64();
      std::vector<int> assignments;
      if (distinct < k) {
        assignments.assign(static_cast<std::size_t>(embeddings.rows), 0);
      } else {
        assignments = kmeans(embeddings, k, repeat_seed, opt.max_iters).assignments;
      }
      nmis[static_cast<std::size_t>(r)] = nmi(assignments, labels);
      aris[static_cast<std::size_t>(r)] = ari(assignments, labels);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(r)] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("clustering protocol: " + e);

  EvalReport nmi_report{"nmi", std::move(nmis)};
  EvalReport ari_report{"ari", std::move(aris)};
  for (auto* rep : {&nmi_report, &ari_report}) {
    rep->seed = opt.seed;
    rep->finalize();
  }
  return {std::move(nmi_report), std::move(ari_report)};
}

}  // namespace hdgi
