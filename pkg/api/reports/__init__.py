# Report tables built from finished run directories
