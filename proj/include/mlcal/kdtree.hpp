#pragma once

#include "mlcal/types.hpp"

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

namespace mlcal {

/// Exact k-d tree over a snapshot of points. Queries return (point index,
/// Euclidean distance) pairs sorted ascending by distance, ties broken by
/// lower index. The tree copies the coordinates; it does not keep the cloud
/// alive.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double distance;
  };

  explicit KdTree(const std::vector<Vec3>& points) : points_(points) {
    if (points_.empty()) throw EmptyCloudError();
    indices_.resize(points_.size());
    std::iota(indices_.begin(), indices_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size());
    root_ = build(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }

  std::vector<Neighbor> nearest(const Vec3& query, std::size_t k) const {
    if (k < 1) throw InvalidParameterError("k must be >= 1");
    KnnHeap heap(std::min(k, points_.size()));
    search_knn(root_, query, heap);
    return heap.sorted();
  }

  std::vector<Neighbor> radius(const Vec3& query, double r) const {
    if (r <= 0.0) throw InvalidParameterError("radius must be positive");
    std::vector<Neighbor> out;
    search_radius(root_, query, r * r, out);
    for (auto& n : out) n.distance = std::sqrt(n.distance);
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance != b.distance ? a.distance < b.distance
                                      : a.index < b.index;
    });
    return out;
  }

 private:
  static constexpr std::size_t kLeafSize = 16;
  static constexpr int kNone = -1;

  struct Node {
    int axis = 0;
    double split = 0.0;
    int left = kNone;
    int right = kNone;
    std::size_t begin = 0;  // leaf range into indices_
    std::size_t end = 0;
    bool leaf() const { return left == kNone && right == kNone; }
  };

  // Bounded max-heap keyed by (squared distance, index).
  class KnnHeap {
   public:
    explicit KnnHeap(std::size_t cap) : cap_(cap) { items_.reserve(cap); }

    double worst() const {
      return items_.size() < cap_ ? std::numeric_limits<double>::infinity()
                                  : items_.front().distance;
    }

    void offer(std::size_t index, double d2) {
      if (items_.size() < cap_) {
        items_.push_back({index, d2});
        std::push_heap(items_.begin(), items_.end(), cmp);
      } else if (d2 < items_.front().distance ||
                 (d2 == items_.front().distance &&
                  index < items_.front().index)) {
        std::pop_heap(items_.begin(), items_.end(), cmp);
        items_.back() = {index, d2};
        std::push_heap(items_.begin(), items_.end(), cmp);
      }
    }

    std::vector<Neighbor> sorted() {
      std::sort(items_.begin(), items_.end(),
                [](const Neighbor& a, const Neighbor& b) {
                  return a.distance != b.distance ? a.distance < b.distance
                                                  : a.index < b.index;
                });
      for (auto& n : items_) n.distance = std::sqrt(n.distance);
      return std::move(items_);
    }

   private:
    static bool cmp(const Neighbor& a, const Neighbor& b) {
      return a.distance != b.distance ? a.distance < b.distance
                                      : a.index > b.index;
    }
    std::size_t cap_;
    std::vector<Neighbor> items_;
  };

  int build(std::size_t begin, std::size_t end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size() - 1);
    }
    // Split on the widest axis at the median.
    Vec3 lo = points_[indices_[begin]];
    Vec3 hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[indices_[i]]);
      hi = hi.cwiseMax(points_[indices_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid,
                     indices_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       const double ca = points_[a][axis];
                       const double cb = points_[b][axis];
                       return ca != cb ? ca < cb : a < b;
                     });
    node.axis = axis;
    node.split = points_[indices_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search_knn(int node_id, const Vec3& query, KnnHeap& heap) const {
    const Node& node = nodes_[node_id];
    if (node.leaf()) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = indices_[i];
        heap.offer(idx, (points_[idx] - query).squaredNorm());
      }
      return;
    }
    const double delta = query[node.axis] - node.split;
    const int near = delta < 0 ? node.left : node.right;
    const int far = delta < 0 ? node.right : node.left;
    search_knn(near, query, heap);
    if (delta * delta <= heap.worst()) search_knn(far, query, heap);
  }

  void search_radius(int node_id, const Vec3& query, double r2,
                     std::vector<Neighbor>& out) const {
    const Node& node = nodes_[node_id];
    if (node.leaf()) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = indices_[i];
        const double d2 = (points_[idx] - query).squaredNorm();
        if (d2 <= r2) out.push_back({idx, d2});
      }
      return;
    }
    const double delta = query[node.axis] - node.split;
    const int near = delta < 0 ? node.left : node.right;
    const int far = delta < 0 ? node.right : node.left;
    search_radius(near, query, r2, out);
    if (delta * delta <= r2) search_radius(far, query, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> indices_;
  std::vector<Node> nodes_;
  int root_ = kNone;
};

}  // namespace mlcal
