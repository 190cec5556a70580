#pragma once

// Umbrella header for the pedal-aware compound-word codec and model.

#include "pedalcw/error.hpp"
#include "pedalcw/harmony.hpp"
#include "pedalcw/midi_io.hpp"
#include "pedalcw/model/checkpoint.hpp"
#include "pedalcw/model/config.hpp"
#include "pedalcw/model/net.hpp"
#include "pedalcw/model/sample.hpp"
#include "pedalcw/model/train.hpp"
#include "pedalcw/pedal.hpp"
#include "pedalcw/pipeline.hpp"
#include "pedalcw/score.hpp"
#include "pedalcw/stats.hpp"
#include "pedalcw/tokens.hpp"
#include "pedalcw/vocab.hpp"
