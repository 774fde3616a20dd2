#include <string>
#include <vector>

#include "attrgen/cli.hpp"

int main(int argc, char** argv) { return attrgen::run(std::vector<std::string>(argv, argv + argc)); }
