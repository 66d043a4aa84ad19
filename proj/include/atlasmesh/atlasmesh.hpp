#pragma once

#include <atlasmesh/core.hpp>
#include <atlasmesh/volume.hpp>
#include <atlasmesh/nrrd.hpp>
#include <atlasmesh/surface.hpp>
#include <atlasmesh/quality.hpp>
#include <atlasmesh/hexmesh.hpp>
#include <atlasmesh/phantom.hpp>
#include <atlasmesh/labeling.hpp>
#include <atlasmesh/materials.hpp>
#include <atlasmesh/bioelectric.hpp>
#include <atlasmesh/io.hpp>
#include <atlasmesh/pipeline.hpp>
