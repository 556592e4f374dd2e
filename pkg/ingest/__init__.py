# Ingest package: CSV sources -> aligned domain arrays
from ingest.extract import RegionCatalog, load_accidents, load_adjacency, load_regions
from ingest.manifest import DatasetManifest, load_manifest, save_manifest
from ingest.normalize import ExternalFeatures, UrbanFeatures, build_external_features, load_urban_features
from ingest.writers import write_city

__all__ = [
    "RegionCatalog",
    "load_accidents",
    "load_adjacency",
    "load_regions",
    "DatasetManifest",
    "load_manifest",
    "save_manifest",
    "ExternalFeatures",
    "UrbanFeatures",
    "build_external_features",
    "load_urban_features",
    "write_city",
]
