"""Hong-Ou-Mandel-interference quantum state tomography."""
