#pragma once

#include <span>
#include <vector>

#include "dro/core.hpp"

/// Batch reductions over problem components.
///
/// `serial` is the reference implementation. `parallel` evaluates components concurrently
/// (OpenMP) into per-index buffers and then reduces them serially in index order, so both
/// produce bit-identical sums.
namespace dro::kernels {

/// A contiguous range [begin, end) or an explicit (possibly repeating) index list.
class IndexSet {
 public:
  static IndexSet range(Index begin, Index end) { return IndexSet(begin, end, {}); }
  static IndexSet list(std::span<const Index> ids) { return IndexSet(0, 0, ids); }

  bool is_range() const { return list_.empty(); }
  Index size() const { return is_range() ? end_ - begin_ : list_.size(); }
  Index operator[](Index k) const { return is_range() ? begin_ + k : list_[k]; }

 private:
  IndexSet(Index b, Index e, std::span<const Index> l) : begin_(b), end_(e), list_(l) {}
  Index begin_;
  Index end_;
  std::span<const Index> list_;
};

/// Sums (not means) of g_i, J_{g_i} and grad h_i over an index set.
struct ComponentSums {
  Vector g;
  Matrix jac;
  Vector h_grad;
};

/// Sums of g_i and h_i values, used by exact objective evaluation.
struct ValueSums {
  Vector g;
  double h = 0;
};

struct ExecPolicy {
  bool parallel = false;
  Index min_parallel = 64;  // smaller batches always run serially
};

namespace serial {
ComponentSums sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids);
ComponentSums delta_sums(const CompositeProblem& p, const Vector& x_new, const Vector& x_old,
                         const IndexSet& ids);
ValueSums value_sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids);
}  // namespace serial

namespace parallel {
ComponentSums sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids);
ComponentSums delta_sums(const CompositeProblem& p, const Vector& x_new, const Vector& x_old,
                         const IndexSet& ids);
ValueSums value_sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids);
}  // namespace parallel

/// True when built with OpenMP.
bool parallel_available();
int max_threads();

ComponentSums sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids,
                   const ExecPolicy& exec);
ComponentSums delta_sums(const CompositeProblem& p, const Vector& x_new, const Vector& x_old,
                         const IndexSet& ids, const ExecPolicy& exec);
ValueSums value_sums(const CompositeProblem& p, const Vector& x, const IndexSet& ids,
                     const ExecPolicy& exec);

}  // namespace dro::kernels
