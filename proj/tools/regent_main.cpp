// Placeholder entry point; the workbench commands land with the pipeline modules.
int main() { return 0; }
