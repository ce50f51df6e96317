#ifndef LUK_LUK_HPP
#define LUK_LUK_HPP

#include "luk/collective.hpp"
#include "luk/constraints.hpp"
#include "luk/error.hpp"
#include "luk/experiment.hpp"
#include "luk/formula.hpp"
#include "luk/grounder.hpp"
#include "luk/kernel.hpp"
#include "luk/mcnaughton.hpp"
#include "luk/normalize.hpp"
#include "luk/parser.hpp"
#include "luk/psl.hpp"
#include "luk/qp.hpp"

#endif  // LUK_LUK_HPP
