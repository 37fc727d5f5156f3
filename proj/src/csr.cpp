#include "confwave/csr.hpp"

#include <algorithm>
#include <omp.h>

namespace confwave {

Csr Csr::from_triplets(int rows, int cols, std::vector<Triplet> t) {
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  Csr m;
  m.rows = rows;
  m.cols = cols;
  m.ptr.assign(rows + 1, 0);
  for (std::size_t k = 0; k < t.size();) {
    std::size_t e = k;
    double s = 0.0;
    while (e < t.size() && t[e].row == t[k].row && t[e].col == t[k].col) s += t[e++].value;
    m.idx.push_back(t[k].col);
    m.val.push_back(s);
    ++m.ptr[t[k].row + 1];
    k = e;
  }
  for (int r = 0; r < rows; ++r) m.ptr[r + 1] += m.ptr[r];
  return m;
}

Csr Csr::transpose() const {
  std::vector<Triplet> t;
  t.reserve(val.size());
  for (int r = 0; r < rows; ++r)
    for (auto k = ptr[r]; k < ptr[r + 1]; ++k) t.push_back({idx[k], r, val[k]});
  return from_triplets(cols, rows, std::move(t));
}

void Csr::apply(const double* x, double* y, Exec exec) const {
  if (exec == Exec::Serial)
    kernels::csr_apply_serial(*this, x, y);
  else
    kernels::csr_apply_parallel(*this, x, y);
}

void Csr::apply_add(double a, const double* x, double* y, Exec exec) const {
  const bool par = exec == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (auto k = ptr[r]; k < ptr[r + 1]; ++k) s += val[k] * x[idx[k]];
    y[r] += a * s;
  }
}

namespace kernels {

void csr_apply_serial(const Csr& A, const double* x, double* y) {
  for (int r = 0; r < A.rows; ++r) {
    double s = 0.0;
    for (auto k = A.ptr[r]; k < A.ptr[r + 1]; ++k) s += A.val[k] * x[A.idx[k]];
    y[r] = s;
  }
}

void csr_apply_parallel(const Csr& A, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < A.rows; ++r) {
    double s = 0.0;
    for (auto k = A.ptr[r]; k < A.ptr[r + 1]; ++k) s += A.val[k] * x[A.idx[k]];
    y[r] = s;
  }
}

namespace {
inline double row_update(const Csr& A, const Csr* B, const double* cur, const double* bnd,
                         const double* prev, double dt2, int r) {
  double s = 0.0;
  for (auto k = A.ptr[r]; k < A.ptr[r + 1]; ++k) s += A.val[k] * cur[A.idx[k]];
  if (B)
    for (auto k = B->ptr[r]; k < B->ptr[r + 1]; ++k) s += B->val[k] * bnd[B->idx[k]];
  return 2.0 * cur[r] - prev[r] + dt2 * s;
}
}  // namespace

void leapfrog_step_serial(const Csr& A, const Csr* B, const double* cur, const double* bnd,
                          const double* prev, double dt2, double* next) {
  for (int r = 0; r < A.rows; ++r) next[r] = row_update(A, B, cur, bnd, prev, dt2, r);
}

void leapfrog_step_parallel(const Csr& A, const Csr* B, const double* cur, const double* bnd,
                            const double* prev, double dt2, double* next) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < A.rows; ++r) next[r] = row_update(A, B, cur, bnd, prev, dt2, r);
}

}  // namespace kernels

void set_thread_count(int k) {
  if (k > 0) omp_set_num_threads(k);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace confwave
