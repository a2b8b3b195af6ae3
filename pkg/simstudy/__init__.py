# Strip simulation experiment: d-manifold estimation and its summary table.
