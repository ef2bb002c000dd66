APP_NAME = "macrobell"
APP_VERSION = "0.2.0"
DESCRIPTION = "Micro-macro Bell test numerics: threshold distinguishability, CHSH values, loss and dense cross-checks"
