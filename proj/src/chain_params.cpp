#include "conqur/instances.hpp"

namespace conqur {

DelusionChainParams delusion_chain_params() {
    DelusionChainParams p;
    p.gamma = 0.9;
    p.r12 = 0.2;
    p.r41 = 0.3 / p.gamma;
    p.r42 = 0.5 / p.gamma;
    p.dim = 2;
    // Found offline by tools/delusion_chain_search and frozen here.
    p.phi = {{{{{0, 2}, {0, 1}}}, {{{0, 0}, {1, -2}}}, {{{2, 0}, {0, 1}}}, {{{-2, 0}, {1, -1}}}}};
    return p;
}

}  // namespace conqur
