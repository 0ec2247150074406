#pragma once

// Sparse system container shared by all discretizations: pattern
// preallocation, scatter-add, symmetric elimination of essential
// conditions, and direct/iterative solves.

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/CholmodSupport>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>
#include <unsupported/Eigen/SparseExtra>

#include "pfx4/core.hpp"

namespace pfx4 {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using DofId = int;

/// Coupling groups: every dof in a group couples to every other dof of the
/// same group (an element, or the union of two elements across an edge).
inline SpMat build_pattern(int ndofs, const std::vector<std::vector<DofId>>& groups) {
  std::vector<std::vector<DofId>> cols(static_cast<std::size_t>(ndofs));
  for (const auto& g : groups)
    for (DofId j : g)
      for (DofId i : g) cols[static_cast<std::size_t>(j)].push_back(i);
  for (DofId j = 0; j < ndofs; ++j) cols[static_cast<std::size_t>(j)].push_back(j);
  SpMat A(ndofs, ndofs);
  Eigen::VectorXi nnz(ndofs);
  for (DofId j = 0; j < ndofs; ++j) {
    auto& c = cols[static_cast<std::size_t>(j)];
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    nnz(j) = static_cast<int>(c.size());
  }
  A.reserve(nnz);
  for (DofId j = 0; j < ndofs; ++j)
    for (DofId i : cols[static_cast<std::size_t>(j)]) A.insert(i, j) = 0.0;
  A.makeCompressed();
  return A;
}

class SparseSystem {
 public:
  SparseSystem() = default;
  explicit SparseSystem(SpMat pattern)
      : A_(std::move(pattern)),
        b_(VecX::Zero(A_.rows())),
        constrained_(static_cast<std::size_t>(A_.rows()), 0),
        prescribed_(VecX::Zero(A_.rows())) {}

  int size() const { return static_cast<int>(A_.rows()); }
  const SpMat& matrix() const { return A_; }
  SpMat& matrix() { return A_; }
  const VecX& rhs() const { return b_; }
  VecX& rhs() { return b_; }

  void zero() {
    std::fill(A_.valuePtr(), A_.valuePtr() + A_.nonZeros(), 0.0);
    b_.setZero();
  }

  /// Adds v to entry (i, j); the entry must exist in the pattern.
  void add(DofId i, DofId j, double v) {
    const int* begin = A_.innerIndexPtr() + A_.outerIndexPtr()[j];
    const int* end = A_.innerIndexPtr() + A_.outerIndexPtr()[j + 1];
    const int* it = std::lower_bound(begin, end, i);
    if (it == end || *it != i)
      throw Error("scatter outside preallocated pattern at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    A_.valuePtr()[it - A_.innerIndexPtr()] += v;
  }

  template <class Derived>
  void scatter_add(std::span<const DofId> dofs, const Eigen::MatrixBase<Derived>& Ke) {
    const auto n = static_cast<Eigen::Index>(dofs.size());
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (Ke(i, j) != 0.0) add(dofs[i], dofs[j], Ke(i, j));
  }

  template <class Derived>
  void scatter_add_rhs(std::span<const DofId> dofs, const Eigen::MatrixBase<Derived>& fe) {
    for (std::size_t i = 0; i < dofs.size(); ++i) b_(dofs[i]) += fe(static_cast<Eigen::Index>(i));
  }

  /// Overwrites equation `dst` with a copy of equation `src` (matrix row
  /// and right-hand side). Row dst's pattern must cover row src's.
  void copy_row(DofId dst, DofId src) {
    for (int j = 0; j < A_.outerSize(); ++j) {
      const int* begin = A_.innerIndexPtr() + A_.outerIndexPtr()[j];
      const int* end = A_.innerIndexPtr() + A_.outerIndexPtr()[j + 1];
      const int* s = std::lower_bound(begin, end, src);
      const int* d = std::lower_bound(begin, end, dst);
      const bool has_s = s != end && *s == src, has_d = d != end && *d == dst;
      const double v = has_s ? A_.valuePtr()[s - A_.innerIndexPtr()] : 0.0;
      if (has_d)
        A_.valuePtr()[d - A_.innerIndexPtr()] = v;
      else if (v != 0.0)
        throw Error("copy_row: pattern of row " + std::to_string(dst) + " misses column " + std::to_string(j));
    }
    b_(dst) = b_(src);
  }

  void constrain(DofId i, double value) {
    constrained_[static_cast<std::size_t>(i)] = 1;
    prescribed_(i) = value;
  }
  void clear_constraints() {
    std::fill(constrained_.begin(), constrained_.end(), 0);
    prescribed_.setZero();
  }
  bool is_constrained(DofId i) const { return constrained_[static_cast<std::size_t>(i)] != 0; }
  const std::vector<char>& constrained_mask() const { return constrained_; }

  /// Symmetric elimination: free rows pick up -A_ij u_j from constrained
  /// columns, constrained rows/columns are zeroed with unit diagonal and
  /// the prescribed value on the right-hand side.
  void apply_constraints() {
    for (int j = 0; j < A_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(A_, j); it; ++it) {
        const int i = static_cast<int>(it.row());
        const bool ci = constrained_[static_cast<std::size_t>(i)] != 0;
        const bool cj = constrained_[static_cast<std::size_t>(j)] != 0;
        if (cj && !ci) b_(i) -= it.value() * prescribed_(j);
        if (ci || cj) it.valueRef() = (i == j) ? 1.0 : 0.0;
      }
    }
    for (int i = 0; i < size(); ++i)
      if (constrained_[static_cast<std::size_t>(i)]) b_(i) = prescribed_(i);
  }

  void dump_matrix_market(const std::string& path) const {
    if (!Eigen::saveMarket(A_, path)) throw Error("cannot write matrix file '" + path + "'");
  }

 private:
  SpMat A_;
  VecX b_;
  std::vector<char> constrained_;
  VecX prescribed_;
};

enum class LinearSolverKind { Direct, Iterative };

/// Direct (supernodal CHOLMOD for SPD, UMFPACK otherwise) or preconditioned
/// iterative solves. The symbolic analysis is cached across calls with the
/// same pattern; the numeric factorization is recomputed every call.
class LinearSolver {
 public:
  explicit LinearSolver(LinearSolverKind kind = LinearSolverKind::Direct, bool symmetric = true)
      : kind_(kind), symmetric_(symmetric) {}

  VecX solve(const SparseSystem& sys) { return solve(sys.matrix(), sys.rhs()); }

  VecX solve(const SpMat& A, const VecX& b) {
    if (A.rows() == 0) return VecX();
    if (kind_ == LinearSolverKind::Iterative) return solve_iterative(A, b);
    if (symmetric_ && !spd_failed_) {
      if (!llt_ || pattern_changed(A)) {
        llt_ = std::make_unique<Llt>();
        llt_->analyzePattern(A);
        remember_pattern(A);
      }
      llt_->factorize(A);
      if (llt_->info() == Eigen::Success) {
        VecX x = llt_->solve(b);
        if (llt_->info() == Eigen::Success && x.allFinite()) return x;
      }
      // Not positive definite (e.g. softening); fall through to LU.
      spd_failed_ = true;
    }
    if (!lu_ || pattern_changed_lu(A)) {
      lu_ = std::make_unique<Lu>();
      lu_->analyzePattern(A);
      lu_nnz_ = A.nonZeros();
      lu_rows_ = A.rows();
    }
    lu_->factorize(A);
    if (lu_->info() != Eigen::Success)
      throw SolverError("sparse LU factorization failed: " + diagnostic(A));
    VecX x = lu_->solve(b);
    if (!x.allFinite()) throw SolverError("sparse LU produced non-finite values: " + diagnostic(A));
    return x;
  }

  /// Resets the SPD fallback latch (e.g. at the start of a new time step).
  void reset() { spd_failed_ = false; }

  static std::string diagnostic(const SpMat& A) {
    double dmin = std::numeric_limits<double>::max(), dmax = 0.0;
    for (int i = 0; i < A.rows(); ++i) {
      const double d = std::abs(A.coeff(i, i));
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    return "n=" + std::to_string(A.rows()) + " |diag| in [" + std::to_string(dmin) + ", " + std::to_string(dmax) +
           "], diagonal ratio " + std::to_string(dmin > 0 ? dmax / dmin : std::numeric_limits<double>::infinity());
  }

 private:
  VecX solve_iterative(const SpMat& A, const VecX& b) {
    VecX x;
    if (symmetric_) {
      Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg;
      cg.setTolerance(1e-10);
      cg.setMaxIterations(20000);
      cg.compute(A);
      x = cg.solve(b);
      if (cg.info() != Eigen::Success)
        throw SolverError("CG did not converge (error " + std::to_string(cg.error()) + "): " + diagnostic(A));
    } else {
      Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> bi;
      bi.setTolerance(1e-10);
      bi.setMaxIterations(20000);
      bi.compute(A);
      x = bi.solve(b);
      if (bi.info() != Eigen::Success)
        throw SolverError("BiCGSTAB did not converge (error " + std::to_string(bi.error()) + "): " + diagnostic(A));
    }
    return x;
  }

  bool pattern_changed(const SpMat& A) const { return A.nonZeros() != nnz_ || A.rows() != rows_; }
  bool pattern_changed_lu(const SpMat& A) const { return A.nonZeros() != lu_nnz_ || A.rows() != lu_rows_; }
  void remember_pattern(const SpMat& A) {
    nnz_ = A.nonZeros();
    rows_ = A.rows();
  }

  LinearSolverKind kind_;
  bool symmetric_;
  bool spd_failed_ = false;
  using Llt = Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower>;
  using Lu = Eigen::UmfPackLU<SpMat>;
  std::unique_ptr<Llt> llt_;
  std::unique_ptr<Lu> lu_;
  Eigen::Index nnz_ = -1, rows_ = -1, lu_nnz_ = -1, lu_rows_ = -1;
};

/// Worker count from PFX4_THREADS (default 1).
inline int worker_count() {
  if (const char* s = std::getenv("PFX4_THREADS")) {
    const int n = std::atoi(s);
    if (n > 0) return n;
  }
  return 1;
}

/// Runs `compute(i)` for i in [0, n) on `workers` threads in batches, then
/// calls `commit(i)` serially in index order. Results are therefore
/// independent of the worker count.
template <class Local, class Compute, class Commit>
void deterministic_loop(std::size_t n, int workers, Compute&& compute, Commit&& commit) {
  constexpr std::size_t kBatch = 2048;
  std::vector<Local> buf;
  for (std::size_t start = 0; start < n; start += kBatch) {
    const std::size_t cnt = std::min(kBatch, n - start);
    buf.assign(cnt, Local{});
    auto run = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t k = lo; k < hi; ++k) compute(start + k, buf[k]);
    };
    if (workers <= 1 || cnt < 64) {
      run(0, cnt);
    } else {
      std::vector<std::thread> th;
      std::vector<std::exception_ptr> errs(static_cast<std::size_t>(workers));
      const std::size_t chunk = (cnt + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
      for (int w = 0; w < workers; ++w) {
        const std::size_t lo = std::min(cnt, chunk * static_cast<std::size_t>(w));
        const std::size_t hi = std::min(cnt, lo + chunk);
        th.emplace_back([&, lo, hi, w] {
          try {
            run(lo, hi);
          } catch (...) {
            errs[static_cast<std::size_t>(w)] = std::current_exception();
          }
        });
      }
      for (auto& t : th) t.join();
      for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t k = 0; k < cnt; ++k) commit(start + k, buf[k]);
  }
}

}  // namespace pfx4
