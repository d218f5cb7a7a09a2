// SPDX-License-Identifier: Apache-2.0

#include <cstdio>

int main() {
    std::fprintf(stderr, "pickdraw: not wired up yet\n");
    return 2;
}
