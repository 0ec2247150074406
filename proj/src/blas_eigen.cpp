// Double-precision BLAS/LAPACK entry points used by CHOLMOD and UMFPACK,
// implemented with Eigen. Linked into every executable so that sparse
// factorizations do not depend on the dense kernels of the system BLAS.

#include <Eigen/Dense>
#include <cctype>

namespace {

using Stride = Eigen::OuterStride<>;
using Mat = Eigen::Map<Eigen::MatrixXd, 0, Stride>;
using CMat = Eigen::Map<const Eigen::MatrixXd, 0, Stride>;

bool is(const char* c, char x) { return std::toupper(static_cast<unsigned char>(*c)) == x; }

// Strided vector access with BLAS increment semantics (negative increments
// walk the array backwards from its far end).
struct Vec {
  double* p;
  int n, inc;
  double& operator[](int i) const { return inc > 0 ? p[i * inc] : p[(n - 1 - i) * -inc]; }
  Eigen::VectorXd get() const {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = (*this)[i];
    return v;
  }
  void set(const Eigen::VectorXd& v) const {
    for (int i = 0; i < n; ++i) (*this)[i] = v(i);
  }
};

template <int Mode, class A, class B>
void tri_solve(const A& a, B& b, bool left) {
  if (left)
    a.template triangularView<Mode>().solveInPlace(b);
  else
    a.template triangularView<Mode>().template solveInPlace<Eigen::OnTheRight>(b);
}

// op(A)^-1 B or B op(A)^-1 for the four uplo/trans combinations.
template <class B>
void tri_dispatch(const char* uplo, const char* trans, const char* diag, const CMat& a, B& b, bool left) {
  const bool lower = is(uplo, 'L'), t = !is(trans, 'N'), unit = is(diag, 'U');
  const bool eff_lower = lower != t;
  auto run = [&](const auto& m) {
    if (eff_lower) {
      if (unit) tri_solve<Eigen::UnitLower>(m, b, left);
      else tri_solve<Eigen::Lower>(m, b, left);
    } else {
      if (unit) tri_solve<Eigen::UnitUpper>(m, b, left);
      else tri_solve<Eigen::Upper>(m, b, left);
    }
  };
  if (t) run(a.transpose());
  else run(a);
}

}  // namespace

extern "C" {

void dgemm_(const char* ta, const char* tb, const int* m, const int* n, const int* k, const double* alpha,
            const double* a, const int* lda, const double* b, const int* ldb, const double* beta, double* c,
            const int* ldc) {
  if (*m == 0 || *n == 0) return;
  Mat C(c, *m, *n, Stride(*ldc));
  if (*beta == 0.0) C.setZero();
  else if (*beta != 1.0) C *= *beta;
  if (*k == 0 || *alpha == 0.0) return;
  const bool at = !is(ta, 'N'), bt = !is(tb, 'N');
  CMat A(a, at ? *k : *m, at ? *m : *k, Stride(*lda));
  CMat B(b, bt ? *n : *k, bt ? *k : *n, Stride(*ldb));
  if (!at && !bt) C.noalias() += *alpha * A * B;
  else if (at && !bt) C.noalias() += *alpha * A.transpose() * B;
  else if (!at) C.noalias() += *alpha * A * B.transpose();
  else C.noalias() += *alpha * A.transpose() * B.transpose();
}

void dsyrk_(const char* uplo, const char* trans, const int* n, const int* k, const double* alpha, const double* a,
            const int* lda, const double* beta, double* c, const int* ldc) {
  if (*n == 0) return;
  Mat C(c, *n, *n, Stride(*ldc));
  const bool lower = is(uplo, 'L');
  for (int j = 0; j < *n; ++j) {
    const int i0 = lower ? j : 0, i1 = lower ? *n : j + 1;
    for (int i = i0; i < i1; ++i) C(i, j) = *beta == 0.0 ? 0.0 : *beta * C(i, j);
  }
  if (*k == 0 || *alpha == 0.0) return;
  const bool t = !is(trans, 'N');
  CMat A(a, t ? *k : *n, t ? *n : *k, Stride(*lda));
  if (lower) {
    if (t) C.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose(), *alpha);
    else C.selfadjointView<Eigen::Lower>().rankUpdate(A, *alpha);
  } else {
    if (t) C.selfadjointView<Eigen::Upper>().rankUpdate(A.transpose(), *alpha);
    else C.selfadjointView<Eigen::Upper>().rankUpdate(A, *alpha);
  }
}

void dtrsm_(const char* side, const char* uplo, const char* transa, const char* diag, const int* m, const int* n,
            const double* alpha, const double* a, const int* lda, double* b, const int* ldb) {
  if (*m == 0 || *n == 0) return;
  Mat B(b, *m, *n, Stride(*ldb));
  if (*alpha == 0.0) {
    B.setZero();
    return;
  }
  if (*alpha != 1.0) B *= *alpha;
  const bool left = is(side, 'L');
  const int na = left ? *m : *n;
  CMat A(a, na, na, Stride(*lda));
  tri_dispatch(uplo, transa, diag, A, B, left);
}

void dtrsv_(const char* uplo, const char* trans, const char* diag, const int* n, const double* a, const int* lda,
            double* x, const int* incx) {
  if (*n == 0) return;
  CMat A(a, *n, *n, Stride(*lda));
  const Vec xv{x, *n, *incx};
  Eigen::VectorXd v = xv.get();
  tri_dispatch(uplo, trans, diag, A, v, true);
  xv.set(v);
}

void dgemv_(const char* trans, const int* m, const int* n, const double* alpha, const double* a, const int* lda,
            const double* x, const int* incx, const double* beta, double* y, const int* incy) {
  if (*m == 0 || *n == 0) return;
  const bool t = !is(trans, 'N');
  const int lx = t ? *m : *n, ly = t ? *n : *m;
  CMat A(a, *m, *n, Stride(*lda));
  const Vec xv{const_cast<double*>(x), lx, *incx}, yv{y, ly, *incy};
  Eigen::VectorXd yy = *beta == 0.0 ? Eigen::VectorXd::Zero(ly) : Eigen::VectorXd(*beta * yv.get());
  if (*alpha != 0.0) {
    const Eigen::VectorXd xx = xv.get();
    if (t) yy.noalias() += *alpha * A.transpose() * xx;
    else yy.noalias() += *alpha * A * xx;
  }
  yv.set(yy);
}

void dger_(const int* m, const int* n, const double* alpha, const double* x, const int* incx, const double* y,
           const int* incy, double* a, const int* lda) {
  if (*m == 0 || *n == 0 || *alpha == 0.0) return;
  Mat A(a, *m, *n, Stride(*lda));
  const Vec xv{const_cast<double*>(x), *m, *incx}, yv{const_cast<double*>(y), *n, *incy};
  A.noalias() += *alpha * xv.get() * yv.get().transpose();
}

void dpotrf_(const char* uplo, const int* n, double* a, const int* lda, int* info) {
  *info = 0;
  if (*n == 0) return;
  Mat A(a, *n, *n, Stride(*lda));
  const Eigen::Index k = is(uplo, 'L') ? Eigen::internal::llt_inplace<double, Eigen::Lower>::blocked(A)
                                       : Eigen::internal::llt_inplace<double, Eigen::Upper>::blocked(A);
  if (k >= 0) *info = static_cast<int>(k) + 1;
}

}  // extern "C"
