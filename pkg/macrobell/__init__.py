from .branding import APP_VERSION as __version__

__all__ = [
	"bell",
	"fock_core",
	"loss",
	"macro_states",
	"oracle",
	"verify",
	"__version__",
]
