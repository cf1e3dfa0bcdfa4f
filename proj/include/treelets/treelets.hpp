#ifndef TREELETS_TREELETS_HPP
#define TREELETS_TREELETS_HPP

#include "treelets/errors.hpp"
#include "treelets/sym_matrix.hpp"
#include "treelets/linalg.hpp"
#include "treelets/treelet.hpp"
#include "treelets/factor_model.hpp"
#include "treelets/eiv_bench.hpp"
#include "treelets/hier_select.hpp"
#include "treelets/csv.hpp"
#include "treelets/serialize.hpp"

#endif  // TREELETS_TREELETS_HPP
