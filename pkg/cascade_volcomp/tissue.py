import enum

# Order used by every per-class tuple in configs and results
TISSUE_CLASSES = ("csf", "gm", "wm")


class TissueLabel(enum.IntEnum):
    BACKGROUND = 0
    CSF = 1
    GM = 2
    WM = 3


CLASS_LABELS = {
    "csf": TissueLabel.CSF,
    "gm": TissueLabel.GM,
    "wm": TissueLabel.WM,
}
