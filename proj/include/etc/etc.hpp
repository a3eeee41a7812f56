// Umbrella header.
#pragma once

#include "etc/aot.hpp"
#include "etc/assignment.hpp"
#include "etc/config.hpp"
#include "etc/errors.hpp"
#include "etc/linalg.hpp"
#include "etc/mapselect.hpp"
#include "etc/matrix_io.hpp"
#include "etc/metrics.hpp"
#include "etc/moeraser.hpp"
#include "etc/nir.hpp"
#include "etc/pca.hpp"
#include "etc/pipeline.hpp"
#include "etc/rng.hpp"
#include "etc/serialize.hpp"
#include "etc/sha256.hpp"
#include "etc/stats.hpp"
#include "etc/synth.hpp"
#include "etc/tmm.hpp"
#include "etc/trainer.hpp"
