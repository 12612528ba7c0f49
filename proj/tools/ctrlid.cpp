#include "ctrlid/app.hpp"

int main(int argc, char** argv) { return ctrlid::app::main(argc, argv); }
