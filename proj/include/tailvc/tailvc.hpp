#ifndef TAILVC_TAILVC_HPP
#define TAILVC_TAILVC_HPP

#include "tailvc/diagnostics.hpp"
#include "tailvc/errors.hpp"
#include "tailvc/estimator.hpp"
#include "tailvc/io.hpp"
#include "tailvc/kernels.hpp"
#include "tailvc/model.hpp"
#include "tailvc/parallel.hpp"
#include "tailvc/pipeline.hpp"
#include "tailvc/random.hpp"
#include "tailvc/simulation.hpp"
#include "tailvc/testing.hpp"
#include "tailvc/tuning.hpp"

#endif
