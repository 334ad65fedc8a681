#include <string>
#include <vector>

#include "lgwae/cli.hpp"

int main(int argc, char** argv) { return lgwae::run_cli(std::vector<std::string>(argv, argv + argc)); }
