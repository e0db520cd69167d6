#ifndef HYPORATE_HYPORATE_HPP_
#define HYPORATE_HYPORATE_HPP_

// Convergence-rate certificates for degenerate, non-reversible SDEs:
// modified-Hessian tensor assembly, generalized-eigenvalue certificates,
// Gamma-calculus identity checks, and a Fokker-Planck cross-validation
// solver.

#include "hyporate/certificate.hpp"
#include "hyporate/density.hpp"
#include "hyporate/errors.hpp"
#include "hyporate/fd.hpp"
#include "hyporate/fpe.hpp"
#include "hyporate/gamma_calculus.hpp"
#include "hyporate/grid.hpp"
#include "hyporate/io.hpp"
#include "hyporate/linalg.hpp"
#include "hyporate/model.hpp"
#include "hyporate/parallel.hpp"
#include "hyporate/tensor.hpp"

#endif  // HYPORATE_HYPORATE_HPP_
