from setuptools import setup
from pathlib import Path


setup(name='fdi_assess',
      version='0.1.0',
      description='Worst-case stealthy false-data-injection attacks on DC power grids.',
      long_description=Path('README.rst').read_text(),
      long_description_content_type='text/x-rst',
      license='MIT',
      classifiers=[
        'Development Status :: 3 - Alpha',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3.9',
        'Topic :: Scientific/Engineering',
      ],
      packages=['fdi_assess', 'fdi_assess.cases'],
      package_data={'fdi_assess.cases': ['*.m']},
      install_requires=[
        'attrs',
        'numpy',
        'scipy>=1.9',
        'networkx',
      ],
      entry_points={
        'console_scripts': ['assess=fdi_assess.cli:main'],
      },
      python_requires='>=3.9',
      zip_safe=False
    )
