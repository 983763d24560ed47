#pragma once

#include "lgmi/core.hpp"

#include <Eigen/Dense>

#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <vector>

namespace lgmi {

enum class Metric
{
  l2,
  linf,
};

struct Neighbor
{
  Eigen::Index id;
  double distance;
};

//! Static kd-tree over a SampleSet. Built once, immutable afterwards;
//! concurrent queries are safe. Ties on exact distance are broken by
//! ascending point id, matching an exhaustive scan sorted on (distance, id).
class NeighborIndex
{
public:
  NeighborIndex(const SampleSet& samples, Metric metric)
    : points_(samples.data())
    , metric_(metric)
  {
    const Eigen::Index n = points_.rows();
    order_.resize(static_cast<size_t>(n));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    nodes_.reserve(static_cast<size_t>(2 * n / kLeafSize + 2));
    root_ = build(0, n);
  }

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  Metric metric() const { return metric_; }
  Eigen::VectorXd point(Eigen::Index id) const
  {
    return points_.row(id).transpose();
  }

  //! The k nearest neighbors of q, smallest distance first. When `exclude`
  //! names a member point it is skipped (used for self-exclusion).
  std::vector<Neighbor> query(const Eigen::VectorXd& q,
                              int k,
                              std::optional<Eigen::Index> exclude = {}) const
  {
    if (q.size() != points_.cols()) {
      throw DimensionMismatchError("query dimension mismatch");
    }
    const Eigen::Index available = points_.rows() - (exclude ? 1 : 0);
    if (k < 1) {
      throw KTooLargeError("k must be >= 1");
    }
    const auto want =
      std::min<Eigen::Index>(static_cast<Eigen::Index>(k), available);
    Heap heap;
    search(root_, q, want, exclude, heap);
    std::vector<Neighbor> out(static_cast<size_t>(heap.size()));
    for (size_t i = out.size(); i-- > 0;) {
      out[i] = Neighbor{ heap.top().second, finish_distance(heap.top().first) };
      heap.pop();
    }
    return out;
  }

  //! Neighbors of member point i, i itself excluded.
  std::vector<Neighbor> query_point(Eigen::Index i, int k) const
  {
    return query(point(i), k, i);
  }

  //! Number of points with distance strictly less than `radius` from q,
  //! excluding the given member point.
  Eigen::Index count_within(const Eigen::VectorXd& q,
                            double radius,
                            std::optional<Eigen::Index> exclude = {}) const
  {
    if (q.size() != points_.cols()) {
      throw DimensionMismatchError("query dimension mismatch");
    }
    Eigen::Index count = 0;
    count_search(root_, q, radius, exclude, count);
    return count;
  }

private:
  static constexpr Eigen::Index kLeafSize = 16;

  struct Node
  {
    int left = -1;
    int right = -1;
    int axis = -1;
    double split = 0.0;
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
  };

  // heap keys hold squared distances for l2, plain distances for linf
  using Heap = std::priority_queue<std::pair<double, Eigen::Index>>;

  double key_distance(const Eigen::VectorXd& q, Eigen::Index id) const
  {
    if (metric_ == Metric::l2) {
      return (points_.row(id).transpose() - q).squaredNorm();
    }
    return (points_.row(id).transpose() - q).cwiseAbs().maxCoeff();
  }

  double finish_distance(double key) const
  {
    return metric_ == Metric::l2 ? std::sqrt(key) : key;
  }

  double axis_key(double delta) const
  {
    return metric_ == Metric::l2 ? delta * delta : delta;
  }

  int build(Eigen::Index begin, Eigen::Index end)
  {
    Node node;
    node.begin = begin;
    node.end = end;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      return id;
    }
    // split on the axis with the widest extent
    int axis = 0;
    double best_extent = -1.0;
    for (int j = 0; j < points_.cols(); ++j) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (Eigen::Index t = begin; t < end; ++t) {
        const double v = points_(order_[static_cast<size_t>(t)], j);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_extent) {
        best_extent = hi - lo;
        axis = j;
      }
    }
    if (best_extent <= 0.0) {
      return id;  // all points identical in every axis: keep as leaf
    }
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end,
                     [this, axis](Eigen::Index a, Eigen::Index b) {
                       return points_(a, axis) < points_(b, axis);
                     });
    const double split = points_(order_[static_cast<size_t>(mid)], axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<size_t>(id)].axis = axis;
    nodes_[static_cast<size_t>(id)].split = split;
    nodes_[static_cast<size_t>(id)].left = left;
    nodes_[static_cast<size_t>(id)].right = right;
    return id;
  }

  void scan_leaf(const Node& node,
                 const Eigen::VectorXd& q,
                 Eigen::Index want,
                 const std::optional<Eigen::Index>& exclude,
                 Heap& heap) const
  {
    for (Eigen::Index t = node.begin; t < node.end; ++t) {
      const Eigen::Index id = order_[static_cast<size_t>(t)];
      if (exclude && *exclude == id) {
        continue;
      }
      const std::pair<double, Eigen::Index> cand{ key_distance(q, id), id };
      if (static_cast<Eigen::Index>(heap.size()) < want) {
        heap.push(cand);
      } else if (cand < heap.top()) {
        heap.pop();
        heap.push(cand);
      }
    }
  }

  void search(int node_id,
              const Eigen::VectorXd& q,
              Eigen::Index want,
              const std::optional<Eigen::Index>& exclude,
              Heap& heap) const
  {
    const Node& node = nodes_[static_cast<size_t>(node_id)];
    if (node.axis < 0) {
      scan_leaf(node, q, want, exclude, heap);
      return;
    }
    const double delta = q(node.axis) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, want, exclude, heap);
    // the far side may still hold an equal-distance point with a smaller id
    if (static_cast<Eigen::Index>(heap.size()) < want ||
        axis_key(std::abs(delta)) <= heap.top().first) {
      search(far, q, want, exclude, heap);
    }
  }

  void count_search(int node_id,
                    const Eigen::VectorXd& q,
                    double radius,
                    const std::optional<Eigen::Index>& exclude,
                    Eigen::Index& count) const
  {
    const Node& node = nodes_[static_cast<size_t>(node_id)];
    if (node.axis < 0) {
      for (Eigen::Index t = node.begin; t < node.end; ++t) {
        const Eigen::Index id = order_[static_cast<size_t>(t)];
        if (exclude && *exclude == id) {
          continue;
        }
        if (finish_distance(key_distance(q, id)) < radius) {
          ++count;
        }
      }
      return;
    }
    const double delta = q(node.axis) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    count_search(near, q, radius, exclude, count);
    if (std::abs(delta) < radius) {
      count_search(far, q, radius, exclude, count);
    }
  }

  Eigen::MatrixXd points_;
  Metric metric_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

//! The k nearest neighbors of q under the index metric, ties broken by
//! ascending point id. When q coincides with a member point, that point is
//! excluded from its own neighborhood.
inline std::vector<Neighbor> knn_query(const NeighborIndex& index,
                                       const Eigen::VectorXd& q,
                                       int k)
{
  const Eigen::Index n = index.size();
  if (k < 1 || static_cast<Eigen::Index>(k) > n) {
    throw KTooLargeError("k=" + std::to_string(k) + " with N=" +
                         std::to_string(n));
  }
  auto hits = index.query(q, std::min<int>(k + 1, static_cast<int>(n)));
  if (!hits.empty() && hits.front().distance == 0.0) {
    // q is a member point: drop it (one zero-distance hit, the lowest id)
    if (static_cast<Eigen::Index>(k) > n - 1) {
      throw KTooLargeError("k=" + std::to_string(k) +
                           " but q is a member point of a set with N=" +
                           std::to_string(n));
    }
    hits.erase(hits.begin());
  }
  if (static_cast<int>(hits.size()) > k) {
    hits.resize(static_cast<size_t>(k));
  }
  return hits;
}

enum class BandwidthRule
{
  per_point,
  global_mean,
};

//! Per-point isotropic bandwidths from the k-th nearest neighbor distance
//! (L2). `per_point` keeps one scale per sample point; `global_mean` assigns
//! every point the mean k-th-NN distance. Zero distances (duplicate rows)
//! fall back to the nearest larger nonzero neighbor distance, then to the
//! global mean.
inline std::vector<BandwidthMatrix> select_bandwidth(const SampleSet& samples,
                                                     int k,
                                                     BandwidthRule rule)
{
  const Eigen::Index n = samples.n();
  const Eigen::Index d = samples.dim();
  if (k < 1 || static_cast<Eigen::Index>(k) > n - 1) {
    throw KTooLargeError("bandwidth k=" + std::to_string(k) + " with N=" +
                         std::to_string(n));
  }
  NeighborIndex index(samples, Metric::l2);

  std::vector<double> scale(static_cast<size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto hits = index.query_point(i, k);
    double h = hits.back().distance;
    if (h == 0.0) {
      // duplicates: walk outward to the first nonzero neighbor distance
      auto all = index.query_point(i, static_cast<int>(n - 1));
      for (size_t t = static_cast<size_t>(k); t < all.size(); ++t) {
        if (all[t].distance > 0.0) {
          h = all[t].distance;
          break;
        }
      }
    }
    scale[static_cast<size_t>(i)] = h;
  }

  double mean = 0.0;
  Eigen::Index n_positive = 0;
  for (double h : scale) {
    if (h > 0.0) {
      mean += h;
      ++n_positive;
    }
  }
  if (n_positive == 0) {
    throw DegenerateDataError("all sample points are identical");
  }
  mean /= static_cast<double>(n_positive);
  for (double& h : scale) {
    if (h == 0.0) {
      h = mean;
    }
  }

  std::vector<BandwidthMatrix> out;
  out.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h =
      rule == BandwidthRule::per_point ? scale[static_cast<size_t>(i)] : mean;
    out.push_back(BandwidthMatrix::isotropic(d, h));
  }
  return out;
}

}  // namespace lgmi
