// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

int main() { return 0; }
