from src.config import DataSection
from src.data.phantom import write_corpus
from src.utils import setup_logging


def main():
    setup_logging()
    settings = DataSection()
    write_corpus("./data/phantom", settings.count, settings.shape, settings.seed)


if __name__ == "__main__":
    main()
