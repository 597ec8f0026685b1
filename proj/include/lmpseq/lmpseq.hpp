#pragma once

#include "lmpseq/errors.hpp"
#include "lmpseq/gaussian.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/value_function.hpp"
#include "lmpseq/value_recursion.hpp"
#include "lmpseq/boundary.hpp"
#include "lmpseq/histories.hpp"
#include "lmpseq/test_engine.hpp"
#include "lmpseq/lagrange_oracle.hpp"
#include "lmpseq/checks.hpp"
