# Dense linear algebra primitives
