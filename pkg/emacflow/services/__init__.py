"""
Services package: meshes, spaces, assembly, time stepping, diagnostics,
benchmarks, output and run orchestration
"""
