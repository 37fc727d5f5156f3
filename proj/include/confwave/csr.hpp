#pragma once

#include <cstdint>
#include <vector>

namespace confwave {

// Execution policy for the data-parallel kernels. Serial variants are the
// reference implementation; parallel ones must agree bitwise (row-independent
// writes, no cross-thread reductions).
enum class Exec { Serial, Parallel };

struct Triplet {
  int row, col;
  double value;
};

// Compressed sparse rows, column indices sorted within a row.
struct Csr {
  int rows = 0, cols = 0;
  std::vector<std::int64_t> ptr{0};
  std::vector<int> idx;
  std::vector<double> val;

  static Csr from_triplets(int rows, int cols, std::vector<Triplet> t);
  Csr transpose() const;
  std::int64_t nnz() const { return static_cast<std::int64_t>(val.size()); }

  // y = A x
  void apply(const double* x, double* y, Exec exec = Exec::Parallel) const;
  // y += a * A x
  void apply_add(double a, const double* x, double* y, Exec exec = Exec::Parallel) const;
};

namespace kernels {

void csr_apply_serial(const Csr& A, const double* x, double* y);
void csr_apply_parallel(const Csr& A, const double* x, double* y);

// One leapfrog level on interior unknowns:
//   next = 2 cur - prev + dt2 * (A cur + B bnd)
// B / bnd may be null (homogeneous boundary). `next` may alias `prev`.
void leapfrog_step_serial(const Csr& A, const Csr* B, const double* cur, const double* bnd,
                          const double* prev, double dt2, double* next);
void leapfrog_step_parallel(const Csr& A, const Csr* B, const double* cur, const double* bnd,
                            const double* prev, double dt2, double* next);

inline void leapfrog_step(Exec exec, const Csr& A, const Csr* B, const double* cur, const double* bnd,
                          const double* prev, double dt2, double* next) {
  if (exec == Exec::Serial)
    leapfrog_step_serial(A, B, cur, bnd, prev, dt2, next);
  else
    leapfrog_step_parallel(A, B, cur, bnd, prev, dt2, next);
}

}  // namespace kernels

// Threads used by the Parallel policy (wraps omp_set_num_threads).
void set_thread_count(int k);
int thread_count();

}  // namespace confwave
