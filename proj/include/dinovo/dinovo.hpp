#ifndef DINOVO_DINOVO_HPP
#define DINOVO_DINOVO_HPP

#include "dinovo/config.hpp"
#include "dinovo/descriptor.hpp"
#include "dinovo/detector.hpp"
#include "dinovo/error.hpp"
#include "dinovo/eval.hpp"
#include "dinovo/fmap.hpp"
#include "dinovo/geometry.hpp"
#include "dinovo/grid.hpp"
#include "dinovo/image.hpp"
#include "dinovo/manifest.hpp"
#include "dinovo/matcher.hpp"
#include "dinovo/matcher_io.hpp"
#include "dinovo/pipeline.hpp"
#include "dinovo/pose_solver.hpp"
#include "dinovo/supervision.hpp"
#include "dinovo/synthetic.hpp"
#include "dinovo/trajectory.hpp"

#endif  // DINOVO_DINOVO_HPP
